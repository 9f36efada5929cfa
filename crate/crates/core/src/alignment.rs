//! Assignment of OCR text spans to grid cells.
//!
//! A span matches a cell when the overlap covers more than `ioa_threshold` of
//! the span's own area. A span qualifying for several cells goes to the one
//! with the largest overlap; exact ties prefer the smaller cell, then the
//! lower `(row, col)` index. Matched texts are joined in reading order with a
//! single space and their confidences averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area, intersection_over_area, merge_bboxes, BBox};
use crate::grid::GridCell;

pub const DEFAULT_IOA_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrSpan {
    pub bbox: BBox,
    pub text: String,
    pub confidence: f64,
}

impl OcrSpan {
    pub fn new(bbox: BBox, text: impl Into<String>, confidence: f64) -> Result<Self> {
        let s = OcrSpan {
            bbox,
            text: text.into(),
            confidence,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if area(&self.bbox) <= 0.0 {
            return Err(Error::schema("bbox", "OCR span box has zero area"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::schema("confidence", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// A grid cell together with its aligned OCR content and, once scored, its
/// conformal score, uncertainty and review flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedCell {
    pub cell: GridCell,
    pub text: String,
    pub ocr_confidence: f64,
    pub matched_span_count: usize,
    /// Envelope of the matched span boxes.
    pub text_bbox: Option<BBox>,
    pub score: Option<f64>,
    pub uncertainty: Option<f64>,
    pub flagged: bool,
}

impl ExtractedCell {
    pub fn empty(cell: GridCell) -> Self {
        ExtractedCell {
            cell,
            text: String::new(),
            ocr_confidence: 0.0,
            matched_span_count: 0,
            text_bbox: None,
            score: None,
            uncertainty: None,
            flagged: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignment {
    pub cells: Vec<ExtractedCell>,
    pub unmatched: Vec<OcrSpan>,
}

/// Index of the cell a span is assigned to, if any.
fn best_cell(span: &OcrSpan, cells: &[GridCell], ioa_threshold: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let Ok(ioa) = intersection_over_area(&span.bbox, &cell.bbox) else {
            return None;
        };
        if ioa <= ioa_threshold {
            continue;
        }
        best = match best {
            None => Some((i, ioa)),
            Some((j, best_ioa)) => {
                let other = &cells[j];
                let better = ioa > best_ioa
                    || (ioa == best_ioa
                        && (area(&cell.bbox), cell.row_index, cell.col_index).partial_cmp(&(
                            area(&other.bbox),
                            other.row_index,
                            other.col_index,
                        )) == Some(std::cmp::Ordering::Less));
                if better {
                    Some((i, ioa))
                } else {
                    Some((j, best_ioa))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

/// Aligns spans with cells. Output cells keep the input cell order; spans
/// that match no cell are returned in input order.
pub fn match_spans(cells: &[GridCell], spans: &[OcrSpan], ioa_threshold: f64) -> Alignment {
    let mut per_cell: Vec<Vec<&OcrSpan>> = vec![Vec::new(); cells.len()];
    let mut unmatched = Vec::new();
    for span in spans {
        match best_cell(span, cells, ioa_threshold) {
            Some(i) => per_cell[i].push(span),
            None => unmatched.push(span.clone()),
        }
    }

    let cells = cells
        .iter()
        .zip(per_cell)
        .map(|(cell, matched)| {
            if matched.is_empty() {
                return ExtractedCell::empty(cell.clone());
            }
            let ordered = order_refs(&matched);
            let text = ordered.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
            let confidence = ordered.iter().map(|s| s.confidence).sum::<f64>() / ordered.len() as f64;
            let boxes: Vec<BBox> = ordered.iter().map(|s| s.bbox).collect();
            ExtractedCell {
                cell: cell.clone(),
                text,
                ocr_confidence: confidence,
                matched_span_count: ordered.len(),
                text_bbox: merge_bboxes(&boxes).ok(),
                score: None,
                uncertainty: None,
                flagged: false,
            }
        })
        .collect();

    Alignment { cells, unmatched }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn order_refs<'a>(spans: &[&'a OcrSpan]) -> Vec<&'a OcrSpan> {
    if spans.len() <= 1 {
        return spans.to_vec();
    }
    let band = median(spans.iter().map(|s| s.bbox.height()).collect());
    let mut by_y: Vec<&OcrSpan> = spans.to_vec();
    by_y.sort_by(|a, b| a.bbox.center_y().total_cmp(&b.bbox.center_y()));

    // a new text line starts once the vertical center moves half a band past the line's first span
    let mut lines: Vec<Vec<&OcrSpan>> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for s in by_y {
        let cy = s.bbox.center_y();
        match lines.last_mut() {
            Some(line) if cy - anchor <= 0.5 * band => line.push(s),
            _ => {
                anchor = cy;
                lines.push(vec![s]);
            }
        }
    }
    lines
        .into_iter()
        .flat_map(|mut line| {
            line.sort_by(|a, b| a.bbox.x0.total_cmp(&b.bbox.x0));
            line
        })
        .collect()
}

/// Sorts spans into reading order: text lines top to bottom, then left to right.
pub fn reading_order(spans: &[OcrSpan]) -> Vec<OcrSpan> {
    let refs: Vec<&OcrSpan> = spans.iter().collect();
    order_refs(&refs).into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn cell(r: usize, c: usize, b: BBox) -> GridCell {
        GridCell {
            row_index: r,
            col_index: c,
            bbox: b,
            row_confidence: 1.0,
            col_confidence: 1.0,
            location_confidence: 1.0,
        }
    }

    fn span(b: BBox, t: &str, c: f64) -> OcrSpan {
        OcrSpan::new(b, t, c).unwrap()
    }

    fn two_cells() -> Vec<GridCell> {
        vec![cell(0, 0, bb(0., 0., 10., 10.)), cell(0, 1, bb(10., 0., 20., 10.))]
    }

    #[test]
    fn containment_assigns_span() {
        let a = match_spans(&two_cells(), &[span(bb(2., 2., 8., 8.), "abc", 0.9)], 0.5);
        assert_eq!(a.cells[0].text, "abc");
        assert_eq!(a.cells[0].matched_span_count, 1);
        assert_eq!(a.cells[1].matched_span_count, 0);
        assert!(a.unmatched.is_empty());
    }

    #[test]
    fn argmax_cell_wins() {
        // 60% in cell A, 40% in cell B
        let a = match_spans(&two_cells(), &[span(bb(4., 2., 14., 8.), "x", 0.9)], 0.5);
        assert_eq!(a.cells[0].text, "x");
        assert_eq!(a.cells[1].text, "");
        // with a low threshold both qualify, argmax still picks A alone
        let a = match_spans(&two_cells(), &[span(bb(4., 2., 14., 8.), "x", 0.9)], 0.1);
        assert_eq!(a.cells[0].matched_span_count, 1);
        assert_eq!(a.cells[1].matched_span_count, 0);
    }

    #[test]
    fn exact_half_is_not_a_match() {
        let a = match_spans(&two_cells(), &[span(bb(5., 2., 15., 8.), "x", 0.9)], 0.5);
        assert_eq!(a.unmatched.len(), 1);
        assert!(a.cells.iter().all(|c| c.matched_span_count == 0));
    }

    #[test]
    fn exact_tie_prefers_smaller_cell_then_lower_index() {
        let cells = vec![cell(0, 1, bb(10., 0., 30., 10.)), cell(0, 0, bb(0., 0., 10., 10.))];
        let a = match_spans(&cells, &[span(bb(5., 2., 15., 8.), "x", 0.9)], 0.25);
        assert_eq!(a.cells[1].text, "x");

        let same = vec![cell(1, 0, bb(10., 0., 20., 10.)), cell(0, 0, bb(0., 0., 10., 10.))];
        let a = match_spans(&same, &[span(bb(5., 2., 15., 8.), "x", 0.9)], 0.25);
        assert_eq!(a.cells[1].text, "x");
    }

    #[test]
    fn empty_cell_rule() {
        let a = match_spans(&two_cells(), &[], 0.5);
        for c in &a.cells {
            assert_eq!(c.text, "");
            assert_eq!(c.ocr_confidence, 0.0);
            assert_eq!(c.text_bbox, None);
        }
    }

    #[test]
    fn multi_span_mean_and_concatenation() {
        let spans = [
            span(bb(5., 2., 8., 8.), "world", 0.6),
            span(bb(1., 2., 4., 8.), "hello", 0.8),
        ];
        let a = match_spans(&two_cells(), &spans, 0.5);
        assert_eq!(a.cells[0].text, "hello world");
        assert!((a.cells[0].ocr_confidence - 0.7).abs() < 1e-12);
        assert_eq!(a.cells[0].text_bbox, Some(bb(1., 2., 8., 8.)));
    }

    #[test]
    fn reading_order_basics() {
        let s = span(bb(1., 1., 2., 2.), "a", 1.0);
        assert_eq!(reading_order(std::slice::from_ref(&s)), vec![s.clone()]);
        let right = span(bb(10., 0., 20., 5.), "r", 1.0);
        let left = span(bb(0., 0., 8., 5.), "l", 1.0);
        let ordered = reading_order(&[right, left]);
        assert_eq!(ordered[0].text, "l");
    }

    #[test]
    fn reading_order_recovers_shuffled_lines() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            // three lines of up to three words with slight vertical wobble
            let mut expected = Vec::new();
            for line in 0..3 {
                let y = 2.0 + line as f64 * 12.0;
                for w in 0..3 {
                    let wobble = (expected.len() % 3) as f64 * 0.7;
                    let x = 1.0 + w as f64 * 15.0;
                    expected.push(span(
                        bb(x, y + wobble, x + 12.0, y + 8.0 + wobble),
                        &format!("{line}{w}"),
                        0.9,
                    ));
                }
            }
            let mut shuffled = expected.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(reading_order(&shuffled), expected);
        }
    }

    fn arb_spans() -> impl Strategy<Value = Vec<OcrSpan>> {
        prop::collection::vec(
            (
                0.0..90.0f64,
                0.0..40.0f64,
                0.5..20.0f64,
                0.5..8.0f64,
                0.0..=1.0f64,
                "[a-z]{0,5}",
            ),
            0..12,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, c, t)| span(bb(x, y, x + w, y + h), &t, c))
                .collect()
        })
    }

    fn lattice() -> Vec<GridCell> {
        let mut cells = Vec::new();
        for r in 0..4 {
            for c in 0..5 {
                let (x, y) = (c as f64 * 20.0, r as f64 * 12.0);
                cells.push(cell(r, c, bb(x, y, x + 20.0, y + 12.0)));
            }
        }
        cells
    }

    proptest! {
        #[test]
        fn every_span_lands_once(spans in arb_spans(), t in 0.05..1.0f64) {
            let a = match_spans(&lattice(), &spans, t);
            let matched: usize = a.cells.iter().map(|c| c.matched_span_count).sum();
            prop_assert_eq!(matched + a.unmatched.len(), spans.len());
            for c in &a.cells {
                prop_assert!((0.0..=1.0).contains(&c.ocr_confidence));
                if c.matched_span_count == 0 {
                    prop_assert!(c.text.is_empty());
                    prop_assert_eq!(c.ocr_confidence, 0.0);
                } else {
                    // length of concatenation is sum of parts plus separators
                    let parts: Vec<&OcrSpan> = spans.iter().filter(|s| {
                        best_cell(s, &lattice(), t).map(|i| (lattice()[i].row_index, lattice()[i].col_index))
                            == Some((c.cell.row_index, c.cell.col_index))
                    }).collect();
                    let total: usize = parts.iter().map(|s| s.text.len()).sum();
                    prop_assert_eq!(c.text.len(), total + c.matched_span_count - 1);
                }
            }
        }

        #[test]
        fn lowering_threshold_never_loses_matches(spans in arb_spans(), hi in 0.1..1.0f64, frac in 0.0..1.0f64) {
            let lo = hi * frac;
            let count = |t: f64| match_spans(&lattice(), &spans, t).cells.iter().map(|c| c.matched_span_count).sum::<usize>();
            prop_assert!(count(lo) >= count(hi));
        }
    }
}
