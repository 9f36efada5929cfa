//! Grid-cell lattice construction from row and column detections.
//!
//! Every row box is intersected with every column box. Rows are indexed by
//! ascending `y0` and columns by ascending `x0`; ties fall back to the other
//! coordinate and then to input order. Each cell carries the mean of its
//! parent row and column confidences as its location confidence.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area, intersect, scale_bbox, BBox, ImageDims};

/// Same-kind boxes overlapping by more than this fraction of the smaller box get a warning.
pub const DUPLICATE_OVERLAP: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Row,
    Column,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDetection {
    pub kind: StructureKind,
    pub bbox: BBox,
    pub confidence: f64,
}

impl StructureDetection {
    pub fn new(kind: StructureKind, bbox: BBox, confidence: f64) -> Result<Self> {
        let d = StructureDetection { kind, bbox, confidence };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::schema("confidence", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One row x column intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub row_index: usize,
    pub col_index: usize,
    pub bbox: BBox,
    pub row_confidence: f64,
    pub col_confidence: f64,
    pub location_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridWarning {
    /// Row and column boxes do not overlap; no cell was emitted for the pair.
    DisjointPair { row_index: usize, col_index: usize },
    /// Two rows (or two columns) overlap heavily; both were kept.
    OverlappingDetections {
        structure: StructureKind,
        first_index: usize,
        second_index: usize,
        overlap: f64,
    },
}

impl fmt::Display for GridWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridWarning::DisjointPair { row_index, col_index } => {
                write!(f, "row {row_index} and column {col_index} do not intersect")
            }
            GridWarning::OverlappingDetections {
                structure,
                first_index,
                second_index,
                overlap,
            } => write!(
                f,
                "{structure:?} detections {first_index} and {second_index} overlap by {:.0}%",
                overlap * 100.0
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub cells: Vec<GridCell>,
    pub warnings: Vec<GridWarning>,
    pub n_rows: usize,
    pub n_cols: usize,
}

fn sort_detections(dets: &[StructureDetection], kind: StructureKind) -> Vec<&StructureDetection> {
    let mut sorted: Vec<&StructureDetection> = dets.iter().collect();
    let key = |d: &StructureDetection| match kind {
        StructureKind::Row => (d.bbox.y0, d.bbox.x0),
        StructureKind::Column => (d.bbox.x0, d.bbox.y0),
    };
    // stable: exact coordinate ties keep input order
    sorted.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    sorted
}

fn check_kind(dets: &[StructureDetection], kind: StructureKind, name: &str) -> Result<()> {
    for (i, d) in dets.iter().enumerate() {
        d.validate().map_err(|e| e.within(&format!("{name}[{i}]")))?;
        if d.kind != kind {
            return Err(Error::schema(format!("{name}[{i}].kind"), format!("expected {kind:?}")));
        }
    }
    Ok(())
}

fn overlap_warnings(sorted: &[&StructureDetection], kind: StructureKind) -> Vec<GridWarning> {
    let mut out = Vec::new();
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            let (a, b) = (&sorted[i].bbox, &sorted[j].bbox);
            let smaller = area(a).min(area(b));
            if smaller <= 0.0 {
                continue;
            }
            if let Some(inter) = intersect(a, b) {
                let overlap = area(&inter) / smaller;
                if overlap > DUPLICATE_OVERLAP {
                    out.push(GridWarning::OverlappingDetections {
                        structure: kind,
                        first_index: i,
                        second_index: j,
                        overlap,
                    });
                }
            }
        }
    }
    out
}

/// Builds the grid lattice. Fails when either detection list is empty.
pub fn build_grid(rows: &[StructureDetection], cols: &[StructureDetection]) -> Result<Grid> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::degenerate("no structure detected"));
    }
    check_kind(rows, StructureKind::Row, "rows")?;
    check_kind(cols, StructureKind::Column, "columns")?;

    let rows = sort_detections(rows, StructureKind::Row);
    let cols = sort_detections(cols, StructureKind::Column);

    let mut warnings = overlap_warnings(&rows, StructureKind::Row);
    warnings.extend(overlap_warnings(&cols, StructureKind::Column));

    let mut cells = Vec::with_capacity(rows.len() * cols.len());
    for (ri, row) in rows.iter().enumerate() {
        for (ci, col) in cols.iter().enumerate() {
            match intersect(&row.bbox, &col.bbox) {
                Some(bbox) => cells.push(GridCell {
                    row_index: ri,
                    col_index: ci,
                    bbox,
                    row_confidence: row.confidence,
                    col_confidence: col.confidence,
                    location_confidence: 0.5 * (row.confidence + col.confidence),
                }),
                None => warnings.push(GridWarning::DisjointPair {
                    row_index: ri,
                    col_index: ci,
                }),
            }
        }
    }

    Ok(Grid {
        cells,
        warnings,
        n_rows: rows.len(),
        n_cols: cols.len(),
    })
}

/// Rescales TSR boxes into the OCR coordinate frame.
pub fn normalize_structures(
    rows: &[StructureDetection],
    cols: &[StructureDetection],
    tsr_dims: ImageDims,
    ocr_dims: ImageDims,
) -> (Vec<StructureDetection>, Vec<StructureDetection>) {
    let rescale = |d: &StructureDetection| StructureDetection {
        bbox: scale_bbox(&d.bbox, tsr_dims, ocr_dims),
        ..d.clone()
    };
    (rows.iter().map(rescale).collect(), cols.iter().map(rescale).collect())
}

/// Lattice ordering of cells: by row, then column.
pub fn cell_order(a: &GridCell, b: &GridCell) -> Ordering {
    (a.row_index, a.col_index).cmp(&(b.row_index, b.col_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(kind: StructureKind, b: [f64; 4], conf: f64) -> StructureDetection {
        StructureDetection::new(kind, BBox::try_from(b).unwrap(), conf).unwrap()
    }

    fn row(y0: f64, y1: f64, conf: f64) -> StructureDetection {
        det(StructureKind::Row, [0.0, y0, 100.0, y1], conf)
    }

    fn col(x0: f64, x1: f64, conf: f64) -> StructureDetection {
        det(StructureKind::Column, [x0, 0.0, x1, 100.0], conf)
    }

    #[test]
    fn full_lattice() {
        let g = build_grid(
            &[row(50., 100., 0.9), row(0., 50., 0.8)],
            &[col(50., 100., 0.7), col(0., 50., 0.6)],
        )
        .unwrap();
        let idx: Vec<_> = g.cells.iter().map(|c| (c.row_index, c.col_index)).collect();
        assert_eq!(idx, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        // row 0 is the upper one (conf 0.8), column 0 the left one (conf 0.6)
        assert!((g.cells[0].location_confidence - 0.7).abs() < 1e-12);
        assert_eq!(g.cells[0].bbox, BBox::new(0., 0., 50., 50.).unwrap());
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn location_confidence_is_mean() {
        let g = build_grid(&[row(0., 10., 0.9)], &[col(0., 10., 0.7)]).unwrap();
        assert!((g.cells[0].location_confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn disjoint_pair_is_skipped_with_warning() {
        let short_col = det(StructureKind::Column, [0.0, 0.0, 10.0, 20.0], 0.9);
        let g = build_grid(&[row(0., 10., 0.9), row(50., 60., 0.9)], &[short_col]).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(
            g.warnings,
            vec![GridWarning::DisjointPair {
                row_index: 1,
                col_index: 0
            }]
        );
    }

    #[test]
    fn empty_structure_is_an_error() {
        let err = build_grid(&[], &[col(0., 10., 0.5)]).unwrap_err();
        assert!(err.to_string().contains("no structure detected"));
        assert!(build_grid(&[row(0., 10., 0.5)], &[]).is_err());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let err = build_grid(&[col(0., 10., 0.5)], &[col(0., 10., 0.5)]).unwrap_err();
        assert!(err.to_string().contains("rows[0].kind"));
    }

    #[test]
    fn overlapping_rows_warn_but_are_kept() {
        let g = build_grid(&[row(0., 10., 0.9), row(1., 10., 0.8)], &[col(0., 10., 0.9)]).unwrap();
        assert_eq!(g.n_rows, 2);
        assert_eq!(g.cells.len(), 2);
        assert!(g.warnings.iter().any(|w| matches!(
            w,
            GridWarning::OverlappingDetections {
                structure: StructureKind::Row,
                ..
            }
        )));
    }

    #[test]
    fn ties_keep_input_order() {
        let a = row(0., 10., 0.1);
        let b = row(0., 10., 0.2);
        let g = build_grid(&[a, b], &[col(0., 10., 1.0)]).unwrap();
        assert_eq!(g.cells[0].row_confidence, 0.1);
        assert_eq!(g.cells[1].row_confidence, 0.2);
    }

    #[test]
    fn normalize_examples() {
        let rows = vec![row(10., 20., 0.9)];
        let cols = vec![col(30., 40., 0.9)];
        let d = ImageDims::new(1000., 800.).unwrap();
        let (r, c) = normalize_structures(&rows, &cols, d, d);
        assert_eq!((r, c), (rows.clone(), cols.clone()));
        let (r, c) = normalize_structures(&rows, &cols, d, ImageDims::new(500., 400.).unwrap());
        assert_eq!(r[0].bbox, BBox::new(0., 5., 50., 10.).unwrap());
        assert_eq!(c[0].bbox, BBox::new(15., 0., 20., 50.).unwrap());
    }

    fn arb_dets(kind: StructureKind) -> impl Strategy<Value = Vec<StructureDetection>> {
        prop::collection::vec((0.0..200.0f64, 1.0..60.0f64, 0.0..=1.0f64), 1..6).prop_map(move |v| {
            v.into_iter()
                .map(|(start, len, conf)| {
                    let b = match kind {
                        StructureKind::Row => [0.0, start, 300.0, start + len],
                        StructureKind::Column => [start, 0.0, start + len, 300.0],
                    };
                    det(kind, b, conf)
                })
                .collect()
        })
    }

    fn summary(g: &Grid) -> Vec<(usize, usize, u64, u64)> {
        g.cells
            .iter()
            .map(|c| {
                (
                    c.row_index,
                    c.col_index,
                    c.row_confidence.to_bits(),
                    c.col_confidence.to_bits(),
                )
            })
            .collect()
    }

    proptest! {
        #[test]
        fn lattice_properties(rows in arb_dets(StructureKind::Row), cols in arb_dets(StructureKind::Column)) {
            let g = build_grid(&rows, &cols).unwrap();
            prop_assert!(g.cells.len() <= rows.len() * cols.len());
            // full-span rows and columns always overlap
            prop_assert_eq!(g.cells.len(), rows.len() * cols.len());
            for c in &g.cells {
                let lo = c.row_confidence.min(c.col_confidence);
                let hi = c.row_confidence.max(c.col_confidence);
                prop_assert!(c.location_confidence >= lo && c.location_confidence <= hi);
            }
            for a in &g.cells {
                for b in &g.cells {
                    if a.row_index == b.row_index {
                        prop_assert_eq!(a.row_confidence, b.row_confidence);
                    }
                    if a.col_index == b.col_index {
                        prop_assert_eq!(a.col_confidence, b.col_confidence);
                    }
                }
            }
        }

        #[test]
        fn indices_invariant_under_permutation(
            rows in arb_dets(StructureKind::Row),
            cols in arb_dets(StructureKind::Column),
            shift in 0usize..6,
        ) {
            let base = build_grid(&rows, &cols).unwrap();
            let mut r2 = rows.clone();
            let mut c2 = cols.clone();
            r2.reverse();
            let k = shift % c2.len();
            c2.rotate_left(k);
            let perm = build_grid(&r2, &c2).unwrap();
            // exact coordinate duplicates may swap confidences, compare geometry instead
            let geo = |g: &Grid| g.cells.iter().map(|c| (c.row_index, c.col_index, c.bbox)).collect::<Vec<_>>();
            prop_assert_eq!(geo(&base), geo(&perm));
        }

        #[test]
        fn grid_invariant_under_uniform_scale(
            rows in arb_dets(StructureKind::Row),
            cols in arb_dets(StructureKind::Column),
            s in 0.1..10.0f64,
        ) {
            let from = ImageDims::new(1000.0, 800.0).unwrap();
            let to = ImageDims::new(1000.0 * s, 800.0 * s).unwrap();
            let (r2, c2) = normalize_structures(&rows, &cols, from, to);
            let a = build_grid(&rows, &cols).unwrap();
            let b = build_grid(&r2, &c2).unwrap();
            prop_assert_eq!(summary(&a), summary(&b));
        }
    }
}
