use serde::{Deserialize, Serialize};

use crate::alignment::DEFAULT_IOA_THRESHOLD;
use crate::conformal::{HssWeights, ScoreFunction, ScoreKind, DEFAULT_ALPHA, DEFAULT_GRID_STEP, DEFAULT_TAU};
use crate::error::{Error, Result};

pub const DEFAULT_CALIB_FRACTION: f64 = 0.5;

/// Settings shared by every batch command. Echoed into each artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub score_fn: ScoreKind,
    pub alpha: f64,
    /// Flag threshold; `None` tunes it on the calibration split.
    pub tau: Option<f64>,
    pub ioa_threshold: f64,
    pub similarity_threshold: f64,
    pub calib_fraction: f64,
    pub seed: u64,
    /// HSS weights; `None` searches the weight grid on the calibration split.
    pub hss_weights: Option<HssWeights>,
    pub grid_step: f64,
    /// One threshold per domain instead of a pooled one.
    pub per_domain_calibration: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            score_fn: ScoreKind::Aps,
            alpha: DEFAULT_ALPHA,
            tau: Some(DEFAULT_TAU),
            ioa_threshold: DEFAULT_IOA_THRESHOLD,
            similarity_threshold: 1.0,
            calib_fraction: DEFAULT_CALIB_FRACTION,
            seed: 0,
            hss_weights: None,
            grid_step: DEFAULT_GRID_STEP,
            per_domain_calibration: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| if ok { Ok(()) } else { Err(Error::schema(field, reason)) };
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", "must be in (0, 1)")?;
        if let Some(t) = self.tau {
            check(t.is_finite() && t >= 0.0, "tau", "must be a finite number >= 0")?;
        }
        check(
            self.ioa_threshold > 0.0 && self.ioa_threshold <= 1.0,
            "ioa_threshold",
            "must be in (0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.similarity_threshold),
            "similarity_threshold",
            "must be in [0, 1]",
        )?;
        check(
            self.calib_fraction > 0.0 && self.calib_fraction < 1.0,
            "calib_fraction",
            "must be in (0, 1)",
        )?;
        check(
            self.grid_step > 0.0 && self.grid_step < 1.0,
            "grid_step",
            "must be in (0, 1)",
        )?;
        if let Some(w) = &self.hss_weights {
            w.validate()?;
        }
        Ok(())
    }

    /// Score function used before any tuning; automatic HSS weights start at all ones.
    pub fn initial_score_function(&self) -> ScoreFunction {
        ScoreFunction::from_kind(self.score_fn, self.hss_weights)
    }

    pub fn needs_labels(&self) -> bool {
        self.tau.is_none() || (self.score_fn == ScoreKind::Hss && self.hss_weights.is_none())
    }
}
