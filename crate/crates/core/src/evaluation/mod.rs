//! Ground-truth matching, correctness labels and before/after quality metrics.

mod levenshtein;
mod report;

pub use levenshtein::{levenshtein_accuracy, levenshtein_distance};
pub use report::{
    compute_report, emulate_human_correction, CorrectionOutcome, EvaluationReport, LabeledCell, ReportCounts,
};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::alignment::ExtractedCell;
use crate::error::{Error, Result};
use crate::geometry::{intersection_over_area, BBox};

/// Minimum share of an extracted cell's area a ground-truth cell must cover to match it.
pub const GT_MATCH_IOA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCell {
    pub bbox: BBox,
    pub start_row: usize,
    pub start_col: usize,
    pub end_row: usize,
    pub end_col: usize,
    pub text: String,
}

impl GroundTruthCell {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if self.end_row < self.start_row {
            return Err(Error::schema("end_row", "must be >= start_row"));
        }
        if self.end_col < self.start_col {
            return Err(Error::schema("end_col", "must be >= start_col"));
        }
        Ok(())
    }
}

/// Identifies a cell across tables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
}

impl CellKey {
    pub fn new(table_id: impl Into<String>, row: usize, col: usize) -> Self {
        CellKey {
            table_id: table_id.into(),
            row,
            col,
        }
    }
}

/// For each extracted cell, the index of the ground-truth cell covering the
/// largest share of its area, when that share exceeds one half. A spanning
/// ground-truth cell may match several grid cells.
pub fn match_ground_truth(cells: &[ExtractedCell], gt: &[GroundTruthCell]) -> Vec<Option<usize>> {
    cells
        .iter()
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in gt.iter().enumerate() {
                let Ok(ioa) = intersection_over_area(&c.cell.bbox, &g.bbox) else {
                    return None;
                };
                if ioa > GT_MATCH_IOA && best.is_none_or(|(_, b)| ioa > b) {
                    best = Some((i, ioa));
                }
            }
            best.map(|(i, _)| i)
        })
        .collect()
}

/// Canonical composition, whitespace runs collapsed to one space, trimmed.
pub fn normalize_text(s: &str) -> String {
    let composed: String = s.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text-level correctness: exact after normalization, or, when
/// `similarity_threshold < 1`, Levenshtein accuracy at least the threshold.
pub fn text_matches(extracted: &str, truth: &str, similarity_threshold: f64) -> bool {
    let (e, t) = (normalize_text(extracted), normalize_text(truth));
    e == t || (similarity_threshold < 1.0 && levenshtein_accuracy(&e, &t) >= similarity_threshold)
}

/// A cell is correct only when it matched a ground-truth cell whose text it reproduces.
pub fn label_correct(cell: &ExtractedCell, gt: Option<&GroundTruthCell>, similarity_threshold: f64) -> bool {
    gt.is_some_and(|g| text_matches(&cell.text, &g.text, similarity_threshold))
}
