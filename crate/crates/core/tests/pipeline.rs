use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use tabuq_core::alignment::OcrSpan;
use tabuq_core::conformal::{ScoreFunction, ScoreKind};
use tabuq_core::evaluation::{GroundTruthCell, ReportCounts};
use tabuq_core::geometry::{BBox, ImageDims};
use tabuq_core::grid::{StructureDetection, StructureKind};
use tabuq_core::pipeline::io::{read_json, write_json, GtInput, OcrInput, TsrInput};
use tabuq_core::pipeline::{
    calibrate_tables, cells_artifact_path, extract_from_inputs, run_calibrate, run_evaluate, run_extract, run_tune,
    Manifest, RunConfig, TableJob, TUNE_ORDER,
};
use tabuq_core::{Error, Exec};

fn corpus() -> Vec<TableJob> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus/manifest.json");
    Manifest::load(&path).unwrap().tables
}

fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn det(kind: StructureKind, b: BBox, c: f64) -> StructureDetection {
    StructureDetection::new(kind, b, c).unwrap()
}

/// `n_rows x n_cols` table of 10x10 cells, one span per cell.
fn lattice(n_rows: usize, n_cols: usize) -> (TsrInput, OcrInput, GtInput) {
    let (w, h) = (n_cols as f64 * 10.0, n_rows as f64 * 10.0);
    let image = ImageDims::new(w, h).unwrap();
    let rows = (0..n_rows)
        .map(|r| {
            det(
                StructureKind::Row,
                bb(0.0, r as f64 * 10.0, w, r as f64 * 10.0 + 10.0),
                0.9,
            )
        })
        .collect();
    let columns = (0..n_cols)
        .map(|c| {
            det(
                StructureKind::Column,
                bb(c as f64 * 10.0, 0.0, c as f64 * 10.0 + 10.0, h),
                0.8,
            )
        })
        .collect();
    let mut spans = Vec::new();
    let mut cells = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            let (x, y) = (c as f64 * 10.0, r as f64 * 10.0);
            let text = format!("r{r}c{c}");
            spans.push(OcrSpan::new(bb(x + 2.0, y + 2.0, x + 8.0, y + 8.0), text.clone(), 0.95).unwrap());
            cells.push(GroundTruthCell {
                bbox: bb(x, y, x + 10.0, y + 10.0),
                start_row: r,
                start_col: c,
                end_row: r,
                end_col: c,
                text,
            });
        }
    }
    (
        TsrInput { image, rows, columns },
        OcrInput { image, spans },
        GtInput { cells },
    )
}

fn write_lattice(dir: &Path, id: &str, n_rows: usize, n_cols: usize) -> TableJob {
    let (tsr, ocr, gt) = lattice(n_rows, n_cols);
    let p = |kind: &str| dir.join(format!("{id}.{kind}.json"));
    std::fs::write(p("tsr"), tsr.to_json()).unwrap();
    std::fs::write(p("ocr"), ocr.to_json()).unwrap();
    std::fs::write(p("gt"), gt.to_json()).unwrap();
    TableJob {
        table_id: id.to_string(),
        domain: "default".into(),
        tsr_input: p("tsr"),
        ocr_input: p("ocr"),
        gt_input: Some(p("gt")),
        image_ref: None,
    }
}

#[test]
fn two_by_two_fixture_without_flags_at_unit_tau() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = vec![write_lattice(dir.path(), "t", 2, 2)];
    let cfg = RunConfig {
        tau: Some(1.0),
        ..RunConfig::default()
    };
    let model = run_calibrate(Exec::Sequential, &jobs, &cfg, None).unwrap();
    let tables = run_extract(Exec::Sequential, &jobs, &cfg, Some(&model), dir.path()).unwrap();
    let t = &tables[0];
    assert_eq!(t.cells.len(), 4);
    assert!(t.cells.iter().all(|c| c.matched_span_count == 1 && !c.flagged));
    assert!(t.unmatched_spans.is_empty());
    assert!(cells_artifact_path(dir.path(), "t").exists());
}

#[test]
fn deleted_span_leaves_empty_cell_with_maximal_lac() {
    let (tsr, mut ocr, _) = lattice(2, 2);
    ocr.spans.remove(3);
    let cfg = RunConfig {
        score_fn: ScoreKind::Lac,
        ..RunConfig::default()
    };
    let t = extract_from_inputs("t", "d", &tsr, &ocr, &cfg, None).unwrap();
    let c = &t.cells[3];
    assert_eq!((c.cell.row_index, c.cell.col_index), (1, 1));
    assert_eq!(c.ocr_confidence, 0.0);
    assert_eq!(c.score, Some(1.0));
}

#[test]
fn extract_artifacts_are_byte_identical_across_runs_and_modes() {
    let jobs = corpus();
    let cfg = RunConfig::default();
    let read_all = |dir: &Path| -> Vec<Vec<u8>> {
        jobs.iter()
            .map(|j| std::fs::read(cells_artifact_path(dir, &j.table_id)).unwrap())
            .collect()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_extract(Exec::Parallel, &jobs, &cfg, None, a.path()).unwrap();
    run_extract(Exec::Parallel, &jobs, &cfg, None, b.path()).unwrap();
    run_extract(Exec::Sequential, &jobs, &cfg, None, c.path()).unwrap();
    assert_eq!(read_all(a.path()), read_all(b.path()));
    assert_eq!(read_all(a.path()), read_all(c.path()));
}

#[test]
fn half_of_forty_cells_calibrate_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = vec![write_lattice(dir.path(), "t", 8, 5)];
    let cfg = RunConfig::default();
    let m1 = run_calibrate(Exec::Parallel, &jobs, &cfg, Some(dir.path())).unwrap();
    let m2 = run_calibrate(Exec::Sequential, &jobs, &cfg, None).unwrap();
    assert_eq!(m1.calibration_cells.len(), 20);
    assert_eq!(m1, m2);
    let other = run_calibrate(Exec::Parallel, &jobs, &RunConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(m1.calibration_cells, other.calibration_cells);
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn identical_scores_give_that_q_hat() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = vec![write_lattice(dir.path(), "t", 4, 4)];
    let m = run_calibrate(Exec::Parallel, &jobs, &RunConfig::default(), None).unwrap();
    // location 0.85, OCR 0.95 everywhere
    let expected = 1.0 - (0.85 + 0.95) / 2.0;
    assert!((m.model.q_hat - expected).abs() < 1e-15);
}

#[test]
fn no_flags_at_unit_tau() {
    let jobs = corpus();
    let cfg = RunConfig {
        alpha: 0.2,
        tau: Some(1.0),
        ..RunConfig::default()
    };
    let model = run_calibrate(Exec::Parallel, &jobs, &cfg, None).unwrap();
    let all = run_evaluate(Exec::Parallel, &jobs, &model, &cfg, None)
        .unwrap()
        .artifact
        .all;
    assert_eq!(all.labor_savings, 1.0);
    assert_eq!(all.recall_uq, 0.0);
    assert_eq!(all.error_rate_after_hc, all.error_rate_before);
}

#[test]
fn evaluation_is_held_out_and_pooled_counts_add_up() {
    let jobs = corpus();
    let cfg = RunConfig {
        alpha: 0.2,
        tau: None,
        ..RunConfig::default()
    };
    let model = run_calibrate(Exec::Parallel, &jobs, &cfg, None).unwrap();
    let eval = run_evaluate(Exec::Parallel, &jobs, &model, &cfg, None).unwrap();
    let calib = model.calibration_set();
    let evaluated: BTreeSet<_> = eval.labeled.iter().map(|(_, l)| l.key.clone()).collect();
    assert!(calib.is_disjoint(&evaluated));
    let a = &eval.artifact;
    assert_eq!(a.all.counts.total, evaluated.len());
    type Field = fn(&ReportCounts) -> usize;
    let fields: [Field; 7] = [
        |c| c.total,
        |c| c.flagged,
        |c| c.incorrect,
        |c| c.flagged_incorrect,
        |c| c.corrected,
        |c| c.unresolvable,
        |c| c.incorrect_after_hc,
    ];
    for field in fields {
        let by_domain: usize = a.per_domain.values().map(|r| field(&r.counts)).sum();
        let by_table: usize = a.per_table.values().map(|r| field(&r.counts)).sum();
        assert_eq!(field(&a.all.counts), by_domain);
        assert_eq!(field(&a.all.counts), by_table);
    }
    assert_eq!(a.per_domain.len(), 4);
}

#[test]
fn per_domain_calibration_fits_each_domain() {
    let jobs = corpus();
    let cfg = RunConfig {
        alpha: 0.2,
        per_domain_calibration: true,
        ..RunConfig::default()
    };
    let m = run_calibrate(Exec::Parallel, &jobs, &cfg, None).unwrap();
    assert_eq!(m.domain_models.len(), 4);
    let total: usize = m.domain_models.values().map(|d| d.calibration_size).sum();
    assert_eq!(total, m.model.calibration_size);
    assert_eq!(m.model_for("biology"), &m.domain_models["biology"]);
    assert_eq!(m.model_for("unknown"), &m.model);
}

#[test]
fn hss_auto_weights_are_searched() {
    let jobs = corpus();
    let cfg = RunConfig {
        score_fn: ScoreKind::Hss,
        alpha: 0.2,
        ..RunConfig::default()
    };
    let m = run_calibrate(Exec::Parallel, &jobs, &cfg, None).unwrap();
    let tuning = m.hss_tuning.expect("auto weights run the grid search");
    assert_eq!(
        m.model.score_function,
        ScoreFunction::Hss {
            weights: tuning.weights
        }
    );
}

#[test]
fn tune_writes_report_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = corpus();
    let cfg = RunConfig {
        alpha: 0.2,
        ..RunConfig::default()
    };
    let report = run_tune(Exec::Parallel, &jobs, &cfg, &TUNE_ORDER, Some(dir.path())).unwrap();
    assert_eq!(report.candidates.len(), TUNE_ORDER.len());
    assert_eq!(report.model.model.score_function.kind(), report.selected);
    assert!(dir.path().join("tune.json").exists());
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn missing_ground_truth_lists_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = write_lattice(dir.path(), "a", 3, 3);
    let mut b = write_lattice(dir.path(), "b", 3, 3);
    a.gt_input = None;
    b.gt_input = None;
    let jobs = vec![a, b];
    let cfg = RunConfig::default();
    let model = run_calibrate(Exec::Parallel, &jobs, &cfg, None).unwrap();
    let err = run_evaluate(Exec::Parallel, &jobs, &model, &cfg, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("a, b"), "{msg}");
    let tuned = RunConfig { tau: None, ..cfg };
    assert!(run_calibrate(Exec::Parallel, &jobs, &tuned, None)
        .unwrap_err()
        .to_string()
        .contains("a, b"));
}

#[test]
fn empty_structures_name_the_table() {
    let (mut tsr, ocr, _) = lattice(2, 2);
    tsr.rows.clear();
    let err = extract_from_inputs("tbl-7", "d", &tsr, &ocr, &RunConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)));
    assert!(err.to_string().contains("tbl-7"), "{err}");
}

#[test]
fn bad_input_file_is_a_schema_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut job = write_lattice(dir.path(), "t", 2, 2);
    let bad = PathBuf::from(dir.path()).join("bad.json");
    std::fs::write(
        &bad,
        r#"{"image":{"width":20,"height":20},"spans":[{"bbox":[5,5,1,1],"text":"x","confidence":0.5}]}"#,
    )
    .unwrap();
    job.ocr_input = bad;
    let err = run_extract(Exec::Parallel, &[job], &RunConfig::default(), None, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("spans[0].bbox"), "{err}");
}

#[test]
fn manifest_rejects_unsafe_table_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    let job = |id: &str| TableJob {
        table_id: id.into(),
        domain: "d".into(),
        tsr_input: "x.json".into(),
        ocr_input: "y.json".into(),
        gt_input: None,
        image_ref: None,
    };
    for id in ["../etc", "", "a/b", ".hidden"] {
        write_json(&path, &Manifest { tables: vec![job(id)] }).unwrap();
        assert_eq!(Manifest::load(&path).unwrap_err().exit_code(), 2, "{id:?}");
    }
    write_json(
        &path,
        &Manifest {
            tables: vec![job("ok_1.v2-a")],
        },
    )
    .unwrap();
    Manifest::load(&path).unwrap();
}

#[test]
fn calibrate_tables_needs_labels_only_when_tuning() {
    let (tsr, ocr, _) = lattice(3, 3);
    let t = extract_from_inputs("t", "d", &tsr, &ocr, &RunConfig::default(), None).unwrap();
    calibrate_tables(
        Exec::Sequential,
        std::slice::from_ref(&t),
        &[None],
        &RunConfig::default(),
    )
    .unwrap();
    let tuned = RunConfig {
        tau: None,
        ..RunConfig::default()
    };
    assert!(calibrate_tables(Exec::Sequential, &[t], &[None], &tuned).is_err());
}

#[test]
fn artifacts_read_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = corpus();
    let cfg = RunConfig {
        alpha: 0.2,
        tau: None,
        ..RunConfig::default()
    };
    let model = run_calibrate(Exec::Parallel, &jobs, &cfg, Some(dir.path())).unwrap();
    let eval = run_evaluate(Exec::Parallel, &jobs, &model, &cfg, Some(dir.path())).unwrap();
    let model_back: tabuq_core::pipeline::ModelArtifact = read_json(&dir.path().join("model.json")).unwrap();
    let report_back: tabuq_core::pipeline::EvaluationArtifact = read_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(model_back, model);
    assert_eq!(report_back, eval.artifact);
}
