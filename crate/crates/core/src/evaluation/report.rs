use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CellKey, GroundTruthCell};
use crate::alignment::ExtractedCell;
use crate::error::{Error, Result};

/// One evaluated cell: whether the labeler flagged it and whether its text was correct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCell {
    pub key: CellKey,
    pub flagged: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub total: usize,
    pub flagged: usize,
    pub incorrect: usize,
    pub flagged_incorrect: usize,
    pub corrected: usize,
    /// Flagged, incorrect and not corrected.
    pub unresolvable: usize,
    pub incorrect_after_hc: usize,
}

/// Quality metrics before review, for the flagging step, and after the
/// flagged cells were corrected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy_before: f64,
    pub error_rate_before: f64,
    pub precision_uq: f64,
    pub recall_uq: f64,
    pub f1_uq: f64,
    pub labor_savings: f64,
    pub error_rate_after_hc: f64,
    pub counts: ReportCounts,
    /// No cell was flagged; precision is reported as 0.
    pub precision_degenerate: bool,
    /// No cell was incorrect; recall is reported as 0.
    pub recall_degenerate: bool,
}

impl EvaluationReport {
    pub fn flagged_fraction(&self) -> f64 {
        self.counts.flagged as f64 / self.counts.total as f64
    }
}

/// Builds the report. `corrected` holds the cells whose text was replaced by
/// the verified value; a corrected cell counts as correct afterwards.
pub fn compute_report(cells: &[LabeledCell], corrected: &BTreeSet<CellKey>) -> Result<EvaluationReport> {
    if cells.is_empty() {
        return Err(Error::degenerate("cannot report on an empty cell set"));
    }
    let mut k = ReportCounts {
        total: cells.len(),
        ..Default::default()
    };
    for c in cells {
        let fixed = corrected.contains(&c.key);
        if c.flagged {
            k.flagged += 1;
        }
        if fixed {
            k.corrected += 1;
        }
        if !c.correct {
            k.incorrect += 1;
            if c.flagged {
                k.flagged_incorrect += 1;
                if !fixed {
                    k.unresolvable += 1;
                }
            }
            if !fixed {
                k.incorrect_after_hc += 1;
            }
        }
    }

    let n = k.total as f64;
    let correct = (k.total - k.incorrect) as f64;
    let precision_degenerate = k.flagged == 0;
    let recall_degenerate = k.incorrect == 0;
    let precision = if precision_degenerate {
        0.0
    } else {
        k.flagged_incorrect as f64 / k.flagged as f64
    };
    let recall = if recall_degenerate {
        0.0
    } else {
        k.flagged_incorrect as f64 / k.incorrect as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy_before = correct / n;
    Ok(EvaluationReport {
        accuracy_before,
        error_rate_before: k.incorrect as f64 / n,
        precision_uq: precision,
        recall_uq: recall,
        f1_uq: f1,
        labor_savings: (k.total - k.flagged) as f64 / n,
        error_rate_after_hc: k.incorrect_after_hc as f64 / n,
        counts: k,
        precision_degenerate,
        recall_degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionOutcome {
    Untouched,
    Corrected,
    /// Flagged, but there is no reference value to correct it with.
    Unresolvable,
}

/// Stands in for a reviewer: every flagged cell with a ground-truth match takes
/// the ground-truth text. `gt_matches[i]` indexes into `gt` for `cells[i]`.
pub fn emulate_human_correction(
    cells: &[ExtractedCell],
    gt_matches: &[Option<usize>],
    gt: &[GroundTruthCell],
) -> Vec<(ExtractedCell, CorrectionOutcome)> {
    cells
        .iter()
        .zip(gt_matches)
        .map(|(c, m)| {
            if !c.flagged {
                return (c.clone(), CorrectionOutcome::Untouched);
            }
            match m.and_then(|i| gt.get(i)) {
                Some(g) => {
                    let mut fixed = c.clone();
                    fixed.text = g.text.clone();
                    (fixed, CorrectionOutcome::Corrected)
                }
                None => (c.clone(), CorrectionOutcome::Unresolvable),
            }
        })
        .collect()
}
