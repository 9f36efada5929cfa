//! Conformal scoring of extracted cells.
//!
//! A score maps a cell's structural and OCR confidences to a non-conformity
//! value in `[0, 1]` (higher is less reliable). Calibration turns a set of
//! scores into the threshold `q_hat`; a cell's uncertainty is how far its
//! score exceeds `q_hat`, and cells whose uncertainty exceeds `tau` are
//! routed to review.

mod calibrate;
mod tuning;

pub use calibrate::{calibrate, flag, quantile_rank, uncertainty, CalibrationModel, DEFAULT_ALPHA, DEFAULT_TAU};
pub use tuning::{
    default_taus, sweep_flag_threshold, sweep_flag_threshold_with, tune_hss_weights, tune_hss_weights_with,
    weight_grid, HssTuning, Sweep, SweepPoint, DEFAULT_GRID_STEP,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row, column and text weights of the hybrid spatial score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HssWeights {
    pub row: f64,
    pub col: f64,
    pub text: f64,
}

impl HssWeights {
    pub const UNIT: HssWeights = HssWeights {
        row: 1.0,
        col: 1.0,
        text: 1.0,
    };

    pub fn new(row: f64, col: f64, text: f64) -> Result<Self> {
        let w = HssWeights { row, col, text };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("row", self.row), ("col", self.col), ("text", self.text)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::schema(format!("hss_weights.{name}"), "must be in [0, 1]"));
            }
        }
        Ok(())
    }

    fn as_tuple(&self) -> (f64, f64, f64) {
        (self.row, self.col, self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Lac,
    Aps,
    Hss,
    OcrOnly,
    TsrOnly,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::Lac => "lac",
            ScoreKind::Aps => "aps",
            ScoreKind::Hss => "hss",
            ScoreKind::OcrOnly => "ocr",
            ScoreKind::TsrOnly => "tsr",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lac" => Ok(ScoreKind::Lac),
            "aps" => Ok(ScoreKind::Aps),
            "hss" => Ok(ScoreKind::Hss),
            "ocr" | "ocr_only" => Ok(ScoreKind::OcrOnly),
            "tsr" | "tsr_only" => Ok(ScoreKind::TsrOnly),
            other => Err(Error::schema("score_fn", format!("unknown score function `{other}`"))),
        }
    }
}

/// A score function. Weights exist only for the hybrid spatial score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreFunction {
    Lac,
    Aps,
    Hss { weights: HssWeights },
    OcrOnly,
    TsrOnly,
}

impl ScoreFunction {
    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreFunction::Lac => ScoreKind::Lac,
            ScoreFunction::Aps => ScoreKind::Aps,
            ScoreFunction::Hss { .. } => ScoreKind::Hss,
            ScoreFunction::OcrOnly => ScoreKind::OcrOnly,
            ScoreFunction::TsrOnly => ScoreKind::TsrOnly,
        }
    }

    /// Score function of `kind`; `weights` is used only for HSS and defaults to all ones.
    pub fn from_kind(kind: ScoreKind, weights: Option<HssWeights>) -> Self {
        match kind {
            ScoreKind::Lac => ScoreFunction::Lac,
            ScoreKind::Aps => ScoreFunction::Aps,
            ScoreKind::Hss => ScoreFunction::Hss {
                weights: weights.unwrap_or(HssWeights::UNIT),
            },
            ScoreKind::OcrOnly => ScoreFunction::OcrOnly,
            ScoreKind::TsrOnly => ScoreFunction::TsrOnly,
        }
    }

    pub fn score(&self, r: &ConformalRecord) -> f64 {
        match self {
            ScoreFunction::Lac => score_lac(r),
            ScoreFunction::Aps => score_aps(r),
            ScoreFunction::Hss { weights } => score_hss(r, weights),
            ScoreFunction::OcrOnly => score_single(r, SingleSource::Ocr),
            ScoreFunction::TsrOnly => score_single(r, SingleSource::Tsr),
        }
    }
}

/// Confidences feeding a conformal score, plus the ground-truth label when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalRecord {
    /// Structural confidence (mean of row and column confidence).
    pub tsr_confidence: f64,
    pub ocr_confidence: f64,
    pub row_confidence: f64,
    pub col_confidence: f64,
    pub correct: Option<bool>,
}

impl ConformalRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tsr_confidence", self.tsr_confidence),
            ("ocr_confidence", self.ocr_confidence),
            ("row_confidence", self.row_confidence),
            ("col_confidence", self.col_confidence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::schema(name, "must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Least-reliable-component score: `1 - min(tsr, ocr)`.
pub fn score_lac(r: &ConformalRecord) -> f64 {
    1.0 - r.tsr_confidence.min(r.ocr_confidence)
}

/// Cumulative-confidence score, normalized to `[0, 1]`: `1 - (tsr + ocr) / 2`.
pub fn score_aps(r: &ConformalRecord) -> f64 {
    1.0 - 0.5 * (r.tsr_confidence + r.ocr_confidence)
}

/// Hybrid spatial score: one minus the geometric mean of structural and
/// content reliability.
pub fn score_hss(r: &ConformalRecord, w: &HssWeights) -> f64 {
    let (w_row, w_col, w_text) = w.as_tuple();
    let r_struct = ((1.0 - w_row * (1.0 - r.row_confidence)) * (1.0 - w_col * (1.0 - r.col_confidence))).sqrt();
    let r_content = w_text * r.ocr_confidence;
    1.0 - (r_struct * r_content).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleSource {
    Ocr,
    Tsr,
}

/// Unaggregated score from one model's confidence.
pub fn score_single(r: &ConformalRecord, source: SingleSource) -> f64 {
    match source {
        SingleSource::Ocr => 1.0 - r.ocr_confidence,
        SingleSource::Tsr => 1.0 - r.tsr_confidence,
    }
}
