//! Batch orchestration: extract, calibrate, tune and evaluate over a manifest of tables.
//!
//! Every stage is deterministic for a fixed config and seed. Tables may be
//! processed in parallel, but results are always gathered in manifest order.

mod calibrate;
mod config;
mod evaluate;
mod extract;
pub mod io;

pub use calibrate::{
    calibrate_tables, calibration_split, domain_seed, keys_by_domain, run_calibrate, run_tune, tune_tables,
    ModelArtifact, TuneCandidate, TuneReport, TUNE_ORDER,
};
pub use config::{RunConfig, DEFAULT_CALIB_FRACTION};
pub use evaluate::{
    evaluate_tables, label_table, load_ground_truth, run_evaluate, Evaluation, EvaluationArtifact, ALL, REPORT_FILE,
    REVIEW_STATE_FILE,
};
pub use extract::{
    cells_artifact_path, conformal_record, extract_all, extract_from_inputs, extract_table, run_extract, CellRecord,
    CellsArtifact, ExtractedTable,
};
pub use io::{GtInput, Manifest, OcrInput, TableJob, TsrInput};
