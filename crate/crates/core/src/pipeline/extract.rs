use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calibrate::ModelArtifact;
use super::config::RunConfig;
use super::io::{write_json, OcrInput, TableJob, TsrInput};
use crate::alignment::{match_spans, ExtractedCell, OcrSpan};
use crate::conformal::{ConformalRecord, ScoreFunction};
use crate::error::Result;
use crate::evaluation::CellKey;
use crate::exec::Exec;
use crate::geometry::{BBox, ImageDims};
use crate::grid::{build_grid, normalize_structures, GridWarning};

/// One table after grid construction, alignment and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedTable {
    pub table_id: String,
    pub domain: String,
    pub image: ImageDims,
    pub score_function: ScoreFunction,
    /// `(q_hat, tau)` when a calibration model was applied.
    pub thresholds: Option<(f64, f64)>,
    pub cells: Vec<ExtractedCell>,
    pub unmatched_spans: Vec<OcrSpan>,
    pub warnings: Vec<GridWarning>,
}

pub fn conformal_record(c: &ExtractedCell) -> ConformalRecord {
    ConformalRecord {
        tsr_confidence: c.cell.location_confidence,
        ocr_confidence: c.ocr_confidence,
        row_confidence: c.cell.row_confidence,
        col_confidence: c.cell.col_confidence,
        correct: None,
    }
}

impl ExtractedTable {
    pub fn key(&self, c: &ExtractedCell) -> CellKey {
        CellKey::new(self.table_id.clone(), c.cell.row_index, c.cell.col_index)
    }

    pub fn records(&self) -> Vec<ConformalRecord> {
        self.cells.iter().map(conformal_record).collect()
    }

    /// Rescores every cell with `f`, dropping any previous uncertainty and flag.
    pub fn rescore(&mut self, f: ScoreFunction) {
        self.score_function = f;
        self.thresholds = None;
        for c in &mut self.cells {
            c.score = Some(f.score(&conformal_record(c)));
            c.uncertainty = None;
            c.flagged = false;
        }
    }

    /// Applies the domain's calibration model: score, uncertainty and flag per cell.
    pub fn apply_model(&mut self, model: &ModelArtifact) {
        let m = model.model_for(&self.domain);
        self.score_function = m.score_function;
        self.thresholds = Some((m.q_hat, m.flag_threshold_tau));
        for c in &mut self.cells {
            let (s, u, f) = m.assess(&conformal_record(c));
            c.score = Some(s);
            c.uncertainty = Some(u);
            c.flagged = f;
        }
    }
}

/// Runs grid construction and alignment on parsed inputs, then scores the cells.
pub fn extract_from_inputs(
    table_id: &str,
    domain: &str,
    tsr: &TsrInput,
    ocr: &OcrInput,
    cfg: &RunConfig,
    model: Option<&ModelArtifact>,
) -> Result<ExtractedTable> {
    let (rows, cols) = normalize_structures(&tsr.rows, &tsr.columns, tsr.image, ocr.image);
    let grid = build_grid(&rows, &cols).map_err(|e| e.within(&format!("table {table_id}")))?;
    let aligned = match_spans(&grid.cells, &ocr.spans, cfg.ioa_threshold);
    let mut table = ExtractedTable {
        table_id: table_id.to_string(),
        domain: domain.to_string(),
        image: ocr.image,
        score_function: cfg.initial_score_function(),
        thresholds: None,
        cells: aligned.cells,
        unmatched_spans: aligned.unmatched,
        warnings: grid.warnings,
    };
    match model {
        Some(m) => table.apply_model(m),
        None => table.rescore(cfg.initial_score_function()),
    }
    Ok(table)
}

pub fn extract_table(job: &TableJob, cfg: &RunConfig, model: Option<&ModelArtifact>) -> Result<ExtractedTable> {
    let tsr = job.load_tsr()?;
    let ocr = job.load_ocr()?;
    extract_from_inputs(&job.table_id, &job.domain, &tsr, &ocr, cfg, model)
}

/// Extracts every job; output order follows `jobs`.
pub fn extract_all(
    exec: Exec,
    jobs: &[TableJob],
    cfg: &RunConfig,
    model: Option<&ModelArtifact>,
) -> Result<Vec<ExtractedTable>> {
    exec.try_map(jobs, |job| extract_table(job, cfg, model))
}

/// One row of the cells artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
    pub text: String,
    pub text_bbox: Option<BBox>,
    pub matched_span_count: usize,
    pub row_confidence: f64,
    pub col_confidence: f64,
    pub location_confidence: f64,
    pub ocr_confidence: f64,
    pub score: Option<f64>,
    pub uncertainty: Option<f64>,
    pub flagged: bool,
}

impl From<&ExtractedCell> for CellRecord {
    fn from(c: &ExtractedCell) -> Self {
        CellRecord {
            row: c.cell.row_index,
            col: c.cell.col_index,
            bbox: c.cell.bbox,
            text: c.text.clone(),
            text_bbox: c.text_bbox,
            matched_span_count: c.matched_span_count,
            row_confidence: c.cell.row_confidence,
            col_confidence: c.cell.col_confidence,
            location_confidence: c.cell.location_confidence,
            ocr_confidence: c.ocr_confidence,
            score: c.score,
            uncertainty: c.uncertainty,
            flagged: c.flagged,
        }
    }
}

/// Per-table extraction output written by `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsArtifact {
    pub table_id: String,
    pub domain: String,
    pub image: ImageDims,
    pub score_function: ScoreFunction,
    pub q_hat: Option<f64>,
    pub tau: Option<f64>,
    pub seed: u64,
    pub cells: Vec<CellRecord>,
    pub unmatched_spans: Vec<OcrSpan>,
    pub warnings: Vec<String>,
}

impl CellsArtifact {
    pub fn new(table: &ExtractedTable, cfg: &RunConfig) -> Self {
        CellsArtifact {
            table_id: table.table_id.clone(),
            domain: table.domain.clone(),
            image: table.image,
            score_function: table.score_function,
            q_hat: table.thresholds.map(|t| t.0),
            tau: table.thresholds.map(|t| t.1),
            seed: cfg.seed,
            cells: table.cells.iter().map(CellRecord::from).collect(),
            unmatched_spans: table.unmatched_spans.clone(),
            warnings: table.warnings.iter().map(|w| w.to_string()).collect(),
        }
    }
}

pub fn cells_artifact_path(out_dir: &Path, table_id: &str) -> std::path::PathBuf {
    out_dir.join("cells").join(format!("{table_id}.json"))
}

/// Extracts every job and writes `cells/<table_id>.json` under `out_dir`.
pub fn run_extract(
    exec: Exec,
    jobs: &[TableJob],
    cfg: &RunConfig,
    model: Option<&ModelArtifact>,
    out_dir: &Path,
) -> Result<Vec<ExtractedTable>> {
    cfg.validate()?;
    let tables = extract_all(exec, jobs, cfg, model)?;
    for t in &tables {
        write_json(&cells_artifact_path(out_dir, &t.table_id), &CellsArtifact::new(t, cfg))?;
    }
    Ok(tables)
}
