use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calibrate::ModelArtifact;
use super::config::RunConfig;
use super::extract::{extract_all, ExtractedTable};
use super::io::{write_json, GtInput, TableJob};
use crate::conformal::ScoreFunction;
use crate::error::{Error, Result};
use crate::evaluation::{
    compute_report, emulate_human_correction, label_correct, match_ground_truth, CellKey, CorrectionOutcome,
    EvaluationReport, LabeledCell,
};
use crate::exec::Exec;
use crate::review::{ReviewCell, ReviewSnapshot, ReviewTable};

/// Pooled report key.
pub const ALL: &str = "ALL";

pub fn load_ground_truth(exec: Exec, jobs: &[TableJob]) -> Result<Vec<Option<GtInput>>> {
    exec.try_map(jobs, |j| j.load_gt())
}

/// Ground-truth match and correctness label for every cell of `table`.
pub fn label_table(table: &ExtractedTable, gt: &GtInput, similarity_threshold: f64) -> (Vec<Option<usize>>, Vec<bool>) {
    let matches = match_ground_truth(&table.cells, &gt.cells);
    let labels = table
        .cells
        .iter()
        .zip(&matches)
        .map(|(c, m)| label_correct(c, m.map(|i| &gt.cells[i]), similarity_threshold))
        .collect();
    (matches, labels)
}

/// Before-review, flagging and after-correction metrics for the held-out cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub config: RunConfig,
    pub seed: u64,
    pub score_function: ScoreFunction,
    pub q_hat: f64,
    pub tau: f64,
    pub all: EvaluationReport,
    pub per_domain: BTreeMap<String, EvaluationReport>,
    pub per_table: BTreeMap<String, EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub artifact: EvaluationArtifact,
    pub review: ReviewSnapshot,
    pub labeled: Vec<(String, LabeledCell)>,
}

/// Evaluates tables that already carry the model's flags. Cells used for
/// calibration are excluded.
pub fn evaluate_tables(
    tables: &[ExtractedTable],
    gt: &[GtInput],
    image_refs: &[Option<String>],
    model: &ModelArtifact,
    cfg: &RunConfig,
) -> Result<Evaluation> {
    let calibration = model.calibration_set();
    let mut labeled_all: Vec<(String, LabeledCell)> = Vec::new();
    let mut corrected_all: BTreeSet<CellKey> = BTreeSet::new();
    let mut per_table = BTreeMap::new();
    let mut review_tables = Vec::new();

    for ((table, g), image_ref) in tables.iter().zip(gt).zip(image_refs) {
        let held_out: Vec<usize> = (0..table.cells.len())
            .filter(|&i| !calibration.contains(&table.key(&table.cells[i])))
            .collect();
        if held_out.is_empty() {
            continue;
        }
        let (matches, labels) = label_table(table, g, cfg.similarity_threshold);
        let emulated = emulate_human_correction(&table.cells, &matches, &g.cells);

        let mut labeled = Vec::with_capacity(held_out.len());
        let mut corrected = BTreeSet::new();
        let mut review_cells = Vec::with_capacity(held_out.len());
        for &i in &held_out {
            let c = &table.cells[i];
            let key = table.key(c);
            if emulated[i].1 == CorrectionOutcome::Corrected {
                corrected.insert(key.clone());
            }
            labeled.push(LabeledCell {
                key,
                flagged: c.flagged,
                correct: labels[i],
            });
            review_cells.push(ReviewCell {
                row: c.cell.row_index,
                col: c.cell.col_index,
                bbox: c.cell.bbox,
                text: c.text.clone(),
                score: c.score.unwrap_or_default(),
                uncertainty: c.uncertainty.unwrap_or(0.0),
                flagged: c.flagged,
                correct: labels[i],
                gt_text: matches[i].map(|m| g.cells[m].text.clone()),
            });
        }
        per_table.insert(table.table_id.clone(), compute_report(&labeled, &corrected)?);
        labeled_all.extend(labeled.into_iter().map(|l| (table.domain.clone(), l)));
        corrected_all.extend(corrected);
        review_tables.push(ReviewTable {
            table_id: table.table_id.clone(),
            domain: table.domain.clone(),
            image_ref: image_ref.clone(),
            cells: review_cells,
        });
    }

    if labeled_all.is_empty() {
        return Err(Error::degenerate("evaluation split is empty"));
    }
    let mut by_domain: BTreeMap<String, Vec<LabeledCell>> = BTreeMap::new();
    for (d, l) in &labeled_all {
        by_domain.entry(d.clone()).or_default().push(l.clone());
    }
    let per_domain = by_domain
        .iter()
        .map(|(d, ls)| Ok((d.clone(), compute_report(ls, &corrected_all)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let pooled: Vec<LabeledCell> = labeled_all.iter().map(|(_, l)| l.clone()).collect();
    let all = compute_report(&pooled, &corrected_all)?;

    let m = &model.model;
    Ok(Evaluation {
        artifact: EvaluationArtifact {
            config: cfg.clone(),
            seed: cfg.seed,
            score_function: m.score_function,
            q_hat: m.q_hat,
            tau: m.flag_threshold_tau,
            all,
            per_domain,
            per_table,
        },
        review: ReviewSnapshot {
            q_hat: m.q_hat,
            tau: m.flag_threshold_tau,
            similarity_threshold: cfg.similarity_threshold,
            tables: review_tables,
        },
        labeled: labeled_all,
    })
}

pub const REPORT_FILE: &str = "report.json";
pub const REVIEW_STATE_FILE: &str = "review_state.json";

/// Extracts with the model applied, evaluates the held-out split and writes
/// `report.json` and `review_state.json` under `out_dir`.
pub fn run_evaluate(
    exec: Exec,
    jobs: &[TableJob],
    model: &ModelArtifact,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<Evaluation> {
    cfg.validate()?;
    let missing: Vec<&str> = jobs
        .iter()
        .filter(|j| j.gt_input.is_none())
        .map(|j| j.table_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::schema(
            "gt_input",
            format!("ground truth missing for tables: {}", missing.join(", ")),
        ));
    }
    let tables = extract_all(exec, jobs, cfg, Some(model))?;
    let gt: Vec<GtInput> = load_ground_truth(exec, jobs)?
        .into_iter()
        .map(|g| g.expect("checked above"))
        .collect();
    let images: Vec<Option<String>> = jobs
        .iter()
        .map(|j| j.image_ref.as_ref().map(|p| p.display().to_string()))
        .collect();
    let eval = evaluate_tables(&tables, &gt, &images, model, cfg)?;
    if let Some(dir) = out_dir {
        write_json(&dir.join(REPORT_FILE), &eval.artifact)?;
        write_json(&dir.join(REVIEW_STATE_FILE), &eval.review)?;
    }
    Ok(eval)
}
