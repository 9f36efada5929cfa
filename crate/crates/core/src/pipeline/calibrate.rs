use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::evaluate::{label_table, load_ground_truth};
use super::extract::{conformal_record, extract_all, ExtractedTable};
use super::io::{write_json, GtInput, TableJob};
use crate::conformal::{
    calibrate, default_taus, sweep_flag_threshold_with, tune_hss_weights_with, uncertainty, CalibrationModel,
    ConformalRecord, HssTuning, ScoreFunction, ScoreKind, Sweep,
};
use crate::error::{Error, Result};
use crate::evaluation::CellKey;
use crate::exec::Exec;

/// Fitted calibration written by `calibrate` and `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub config: RunConfig,
    /// Pooled over all domains.
    pub model: CalibrationModel,
    /// Present only with per-domain calibration.
    pub domain_models: BTreeMap<String, CalibrationModel>,
    pub hss_tuning: Option<HssTuning>,
    pub tau_sweep: Option<Sweep>,
    pub calibration_cells: Vec<CellKey>,
}

impl ModelArtifact {
    pub fn model_for(&self, domain: &str) -> &CalibrationModel {
        self.domain_models.get(domain).unwrap_or(&self.model)
    }

    pub fn calibration_set(&self) -> BTreeSet<CellKey> {
        self.calibration_cells.iter().cloned().collect()
    }
}

pub fn domain_seed(seed: u64, domain: &str) -> u64 {
    // FNV-1a keeps each domain's split independent of which other domains exist
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in domain.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// Seeded per-domain split: `floor(fraction * n)` cells of each domain go to calibration.
pub fn calibration_split(
    keys_by_domain: &BTreeMap<String, Vec<CellKey>>,
    fraction: f64,
    seed: u64,
) -> BTreeMap<String, BTreeSet<CellKey>> {
    keys_by_domain
        .iter()
        .map(|(domain, keys)| {
            let mut sorted = keys.clone();
            sorted.sort();
            let mut rng = ChaCha8Rng::seed_from_u64(domain_seed(seed, domain));
            sorted.shuffle(&mut rng);
            let take = (fraction * sorted.len() as f64).floor() as usize;
            (domain.clone(), sorted.into_iter().take(take).collect())
        })
        .collect()
}

pub fn keys_by_domain(tables: &[ExtractedTable]) -> BTreeMap<String, Vec<CellKey>> {
    let mut out: BTreeMap<String, Vec<CellKey>> = BTreeMap::new();
    for t in tables {
        out.entry(t.domain.clone())
            .or_default()
            .extend(t.cells.iter().map(|c| t.key(c)));
    }
    out
}

struct CalibCell {
    key: CellKey,
    domain: String,
    record: ConformalRecord,
}

/// Fits the calibration model on already-extracted tables. `gt[i]` belongs to
/// `tables[i]` and is needed only when the config tunes `tau` or HSS weights.
pub fn calibrate_tables(
    exec: Exec,
    tables: &[ExtractedTable],
    gt: &[Option<GtInput>],
    cfg: &RunConfig,
) -> Result<ModelArtifact> {
    cfg.validate()?;
    let split = calibration_split(&keys_by_domain(tables), cfg.calib_fraction, cfg.seed);
    let in_split: BTreeSet<&CellKey> = split.values().flatten().collect();
    if in_split.is_empty() {
        return Err(Error::degenerate("calibration split is empty"));
    }
    if cfg.per_domain_calibration {
        if let Some((d, _)) = split.iter().find(|(_, s)| s.is_empty()) {
            return Err(Error::degenerate(format!(
                "calibration split for domain `{d}` is empty"
            )));
        }
    }

    let needs_labels = cfg.needs_labels();
    let mut missing_gt = Vec::new();
    let mut calib = Vec::with_capacity(in_split.len());
    for (t, g) in tables.iter().zip(gt) {
        let chosen: Vec<usize> = (0..t.cells.len())
            .filter(|&i| in_split.contains(&t.key(&t.cells[i])))
            .collect();
        if chosen.is_empty() {
            continue;
        }
        let labels = match (needs_labels, g) {
            (false, _) => None,
            (true, Some(g)) => Some(label_table(t, g, cfg.similarity_threshold).1),
            (true, None) => {
                missing_gt.push(t.table_id.clone());
                continue;
            }
        };
        for i in chosen {
            let mut record = conformal_record(&t.cells[i]);
            record.correct = labels.as_ref().map(|l| l[i]);
            calib.push(CalibCell {
                key: t.key(&t.cells[i]),
                domain: t.domain.clone(),
                record,
            });
        }
    }
    if !missing_gt.is_empty() {
        return Err(Error::schema(
            "gt_input",
            format!(
                "ground truth required for tuning but missing for tables: {}",
                missing_gt.join(", ")
            ),
        ));
    }

    let records: Vec<ConformalRecord> = calib.iter().map(|c| c.record).collect();
    let (score_function, hss_tuning) = match (cfg.score_fn, cfg.hss_weights) {
        (ScoreKind::Hss, None) => {
            let tuning = tune_hss_weights_with(exec, &records, cfg.alpha, cfg.grid_step)?;
            (
                ScoreFunction::Hss {
                    weights: tuning.weights,
                },
                Some(tuning),
            )
        }
        (kind, w) => (ScoreFunction::from_kind(kind, w), None),
    };
    let scores: Vec<f64> = records.iter().map(|r| score_function.score(r)).collect();

    let pooled_q = calibrate(&scores, cfg.alpha)?;
    let mut domain_q: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    if cfg.per_domain_calibration {
        for domain in split.keys() {
            let ds: Vec<f64> = calib
                .iter()
                .zip(&scores)
                .filter(|(c, _)| &c.domain == domain)
                .map(|(_, s)| *s)
                .collect();
            domain_q.insert(domain.clone(), (calibrate(&ds, cfg.alpha)?, ds.len()));
        }
    }
    let q_for = |domain: &str| domain_q.get(domain).map_or(pooled_q, |d| d.0);

    let (tau, tau_sweep) = match cfg.tau {
        Some(t) => (t, None),
        None => {
            let labeled: Vec<(f64, bool)> = calib
                .iter()
                .zip(&scores)
                .map(|(c, s)| {
                    (
                        uncertainty(*s, q_for(&c.domain)),
                        c.record.correct.expect("labels loaded"),
                    )
                })
                .collect();
            let sweep = sweep_flag_threshold_with(exec, &labeled, &default_taus())?;
            (sweep.best_tau, Some(sweep))
        }
    };

    let make = |q_hat: f64, n: usize| CalibrationModel {
        score_function,
        alpha: cfg.alpha,
        q_hat,
        flag_threshold_tau: tau,
        calibration_size: n,
    };
    let mut calibration_cells: Vec<CellKey> = calib.into_iter().map(|c| c.key).collect();
    calibration_cells.sort();
    Ok(ModelArtifact {
        config: cfg.clone(),
        model: make(pooled_q, scores.len()),
        domain_models: domain_q.into_iter().map(|(d, (q, n))| (d, make(q, n))).collect(),
        hss_tuning,
        tau_sweep,
        calibration_cells,
    })
}

/// Extracts the jobs, fits the model and writes `model.json` under `out_dir`.
pub fn run_calibrate(exec: Exec, jobs: &[TableJob], cfg: &RunConfig, out_dir: Option<&Path>) -> Result<ModelArtifact> {
    cfg.validate()?;
    if jobs.is_empty() {
        return Err(Error::degenerate("no tables to calibrate on"));
    }
    let tables = extract_all(exec, jobs, cfg, None)?;
    let gt = if cfg.needs_labels() {
        load_ground_truth(exec, jobs)?
    } else {
        vec![None; jobs.len()]
    };
    let model = calibrate_tables(exec, &tables, &gt, cfg)?;
    if let Some(dir) = out_dir {
        write_json(&dir.join("model.json"), &model)?;
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCandidate {
    pub score_fn: ScoreKind,
    pub score_function: ScoreFunction,
    pub q_hat: f64,
    pub best_tau: f64,
    pub best_f1: f64,
}

/// Threshold sweep for each candidate score function and the F1-best choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub candidates: Vec<TuneCandidate>,
    pub selected: ScoreKind,
    pub model: ModelArtifact,
}

/// Candidate order; earlier entries win F1 ties.
pub const TUNE_ORDER: [ScoreKind; 5] = [
    ScoreKind::Aps,
    ScoreKind::Lac,
    ScoreKind::Hss,
    ScoreKind::OcrOnly,
    ScoreKind::TsrOnly,
];

/// Tunes `tau` for each score function in `kinds` on the calibration split and
/// keeps the one with the highest F1.
pub fn tune_tables(
    exec: Exec,
    tables: &[ExtractedTable],
    gt: &[Option<GtInput>],
    cfg: &RunConfig,
    kinds: &[ScoreKind],
) -> Result<TuneReport> {
    if kinds.is_empty() {
        return Err(Error::schema("score_fn", "no score function to tune"));
    }
    let mut best: Option<(f64, ModelArtifact)> = None;
    let mut candidates = Vec::new();
    for &kind in kinds {
        let c = RunConfig {
            score_fn: kind,
            tau: None,
            ..cfg.clone()
        };
        let m = calibrate_tables(exec, tables, gt, &c)?;
        let f1 = m.tau_sweep.as_ref().map_or(0.0, |s| s.best_f1);
        candidates.push(TuneCandidate {
            score_fn: kind,
            score_function: m.model.score_function,
            q_hat: m.model.q_hat,
            best_tau: m.model.flag_threshold_tau,
            best_f1: f1,
        });
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, m));
        }
    }
    let (_, model) = best.expect("kinds is nonempty");
    Ok(TuneReport {
        candidates,
        selected: model.model.score_function.kind(),
        model,
    })
}

/// Extracts, tunes and writes `tune.json` and the selected `model.json`.
pub fn run_tune(
    exec: Exec,
    jobs: &[TableJob],
    cfg: &RunConfig,
    kinds: &[ScoreKind],
    out_dir: Option<&Path>,
) -> Result<TuneReport> {
    cfg.validate()?;
    let tables = extract_all(exec, jobs, cfg, None)?;
    let gt = load_ground_truth(exec, jobs)?;
    let report = tune_tables(exec, &tables, &gt, cfg, kinds)?;
    if let Some(dir) = out_dir {
        write_json(&dir.join("tune.json"), &report)?;
        write_json(&dir.join("model.json"), &report.model)?;
    }
    Ok(report)
}
