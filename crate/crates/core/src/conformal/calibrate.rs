use serde::{Deserialize, Serialize};

use super::{ConformalRecord, ScoreFunction};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.1;
/// Flag threshold that maximized F1 for the APS score on the reference data.
pub const DEFAULT_TAU: f64 = 0.03;

// absorbs representation error in (n + 1)(1 - alpha) landing just above an integer
const RANK_EPS: f64 = 1e-9;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::schema("alpha", "must be in (0, 1)"))
    }
}

/// 1-based rank `ceil((n + 1)(1 - alpha))`, clamped to `[1, n]`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let k = (x - RANK_EPS).ceil().max(1.0) as usize;
    k.min(n)
}

/// Conformal threshold: the `ceil((n + 1)(1 - alpha)) / n` empirical quantile
/// of the calibration scores. Levels above one clamp to the maximum score.
pub fn calibrate(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::degenerate("empty calibration set"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::schema("scores", "calibration scores must be finite"));
    }
    let k = quantile_rank(scores.len(), alpha);
    let mut sorted = scores.to_vec();
    // k-th smallest without a full sort
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// `max(0, score - q_hat)`.
pub fn uncertainty(score: f64, q_hat: f64) -> f64 {
    (score - q_hat).max(0.0)
}

/// Routes a cell to review when its uncertainty strictly exceeds `tau`.
pub fn flag(u: f64, tau: f64) -> bool {
    u > tau
}

/// A fitted conformal threshold together with the score function and flag
/// threshold it applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub score_function: ScoreFunction,
    pub alpha: f64,
    pub q_hat: f64,
    pub flag_threshold_tau: f64,
    pub calibration_size: usize,
}

impl CalibrationModel {
    pub fn fit(score_function: ScoreFunction, records: &[ConformalRecord], alpha: f64, tau: f64) -> Result<Self> {
        let scores: Vec<f64> = records.iter().map(|r| score_function.score(r)).collect();
        Self::from_scores(score_function, &scores, alpha, tau)
    }

    pub fn from_scores(score_function: ScoreFunction, scores: &[f64], alpha: f64, tau: f64) -> Result<Self> {
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::schema("tau", "must be >= 0"));
        }
        Ok(CalibrationModel {
            score_function,
            alpha,
            q_hat: calibrate(scores, alpha)?,
            flag_threshold_tau: tau,
            calibration_size: scores.len(),
        })
    }

    /// `(score, uncertainty, flagged)` for one record.
    pub fn assess(&self, r: &ConformalRecord) -> (f64, f64, bool) {
        let s = self.score_function.score(r);
        let u = uncertainty(s, self.q_hat);
        (s, u, flag(u, self.flag_threshold_tau))
    }
}
