//! Flag-threshold sweep and HSS weight grid search.

use serde::{Deserialize, Serialize};

use super::{calibrate, ConformalRecord, HssWeights, ScoreFunction};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DEFAULT_GRID_STEP: f64 = 0.1;

/// `0.01, 0.02, ..., 1.00`.
pub fn default_taus() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub flagged: usize,
    pub flagged_incorrect: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub best_tau: f64,
    pub best_f1: f64,
    pub points: Vec<SweepPoint>,
}

fn sweep_point(labeled: &[(f64, bool)], n_incorrect: usize, tau: f64) -> SweepPoint {
    let mut flagged = 0;
    let mut tp = 0;
    for &(u, correct) in labeled {
        if u > tau {
            flagged += 1;
            if !correct {
                tp += 1;
            }
        }
    }
    let precision = if flagged == 0 { 0.0 } else { tp as f64 / flagged as f64 };
    let recall = tp as f64 / n_incorrect as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SweepPoint {
        tau,
        flagged,
        flagged_incorrect: tp,
        precision,
        recall,
        f1,
    }
}

pub fn sweep_flag_threshold(labeled: &[(f64, bool)], taus: &[f64]) -> Result<Sweep> {
    sweep_flag_threshold_with(Exec::default(), labeled, taus)
}

/// Scores "flagged means incorrect" at every `tau` and returns the F1-maximizing
/// threshold. Ties go to the smaller `tau`.
pub fn sweep_flag_threshold_with(exec: Exec, labeled: &[(f64, bool)], taus: &[f64]) -> Result<Sweep> {
    let n_incorrect = labeled.iter().filter(|(_, c)| !c).count();
    if n_incorrect == 0 {
        return Err(Error::degenerate("degenerate tuning set: no incorrect records"));
    }
    if taus.is_empty() {
        return Err(Error::schema("taus", "at least one threshold is required"));
    }
    let points = exec.map(taus, |&tau| sweep_point(labeled, n_incorrect, tau));
    let best = points
        .iter()
        .reduce(|best, p| {
            if p.f1 > best.f1 || (p.f1 == best.f1 && p.tau < best.tau) {
                p
            } else {
                best
            }
        })
        .expect("taus is nonempty");
    Ok(Sweep {
        best_tau: best.tau,
        best_f1: best.f1,
        points,
    })
}

/// `{0, step, 2 step, ..., 1}`; 1 is always included.
pub fn weight_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::schema("grid_step", "must be in (0, 1)"));
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let v = k as f64 * step;
        if v > 1.0 + 1e-9 {
            break;
        }
        grid.push(v.min(1.0));
        k += 1;
    }
    if *grid.last().unwrap() < 1.0 - 1e-9 {
        grid.push(1.0);
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HssTuning {
    pub weights: HssWeights,
    /// False when no triple reached the error-recall target; the weights then maximize recall.
    pub feasible: bool,
    pub flagged_fraction: f64,
    pub error_recall: f64,
    pub q_hat: f64,
}

pub fn tune_hss_weights(calib: &[ConformalRecord], alpha: f64, grid_step: f64) -> Result<HssTuning> {
    tune_hss_weights_with(Exec::default(), calib, alpha, grid_step)
}

/// Exhaustive search over the weight grid. Each triple is calibrated at
/// `alpha` and flags cells with positive uncertainty; the winner flags the
/// fewest cells while still flagging at least `1 - alpha` of the incorrect
/// ones. Ties go to the lexicographically smallest triple.
pub fn tune_hss_weights_with(exec: Exec, calib: &[ConformalRecord], alpha: f64, grid_step: f64) -> Result<HssTuning> {
    if calib.is_empty() {
        return Err(Error::degenerate("empty calibration set"));
    }
    let labels: Vec<bool> = calib
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.correct
                .ok_or_else(|| Error::schema(format!("calib[{i}].correct"), "label required"))
        })
        .collect::<Result<_>>()?;
    let n_incorrect = labels.iter().filter(|c| !**c).count();

    let grid = weight_grid(grid_step)?;
    let g = grid.len();
    let target = 1.0 - alpha;

    let candidates = exec.try_map(&(0..g * g * g).collect::<Vec<_>>(), |&idx| -> Result<HssTuning> {
        let weights = HssWeights {
            row: grid[idx / (g * g)],
            col: grid[(idx / g) % g],
            text: grid[idx % g],
        };
        let f = ScoreFunction::Hss { weights };
        let scores: Vec<f64> = calib.iter().map(|r| f.score(r)).collect();
        let q_hat = calibrate(&scores, alpha)?;
        let mut flagged = 0usize;
        let mut caught = 0usize;
        for (s, correct) in scores.iter().zip(&labels) {
            if *s > q_hat {
                flagged += 1;
                if !correct {
                    caught += 1;
                }
            }
        }
        let error_recall = if n_incorrect == 0 {
            1.0
        } else {
            caught as f64 / n_incorrect as f64
        };
        Ok(HssTuning {
            weights,
            feasible: error_recall >= target - 1e-12,
            flagged_fraction: flagged as f64 / calib.len() as f64,
            error_recall,
            q_hat,
        })
    })?;

    // candidates are in lexicographic order, so strict comparisons keep the first on ties
    let best_feasible = candidates.iter().filter(|c| c.feasible).reduce(|best, c| {
        if c.flagged_fraction < best.flagged_fraction {
            c
        } else {
            best
        }
    });
    let chosen = match best_feasible {
        Some(c) => c.clone(),
        None => candidates
            .iter()
            .reduce(|best, c| if c.error_recall > best.error_recall { c } else { best })
            .cloned()
            .expect("grid is nonempty"),
    };
    Ok(chosen)
}
