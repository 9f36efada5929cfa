//! Seeded synthetic corpus with known ground truth and injected errors.
//!
//! Each table is laid out on a page image, detected rows and columns are
//! reported in a downscaled detector frame, and OCR spans are emitted per word.
//! Errors are injected per cell: dropped spans, corrupted text with low OCR
//! confidence, rare corrupted text with high confidence, and displaced row
//! detections with lowered confidence. Blank cells have empty ground truth and
//! no spans.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::OcrSpan;
use crate::error::Result;
use crate::evaluation::GroundTruthCell;
use crate::geometry::{BBox, ImageDims};
use crate::grid::{StructureDetection, StructureKind};
use crate::pipeline::io::{write_json, GtInput, OcrInput, TsrInput};
use crate::pipeline::{Manifest, TableJob};

pub const DEFAULT_SEED: u64 = 7;

pub const DOMAINS: [&str; 4] = ["computer_science", "materials_science", "biology", "icdar2013"];

/// Detector frame width; the page is rescaled to this before detection.
const TSR_WIDTH: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub domains: Vec<String>,
    pub tables_per_domain: usize,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    /// Probability that a body cell holds more than one word.
    pub multi_word_rate: f64,
    pub blank_rate: f64,
    /// Drops the only span of a single-word cell.
    pub drop_rate: f64,
    /// Corrupts one word and lowers its confidence.
    pub corrupt_rate: f64,
    /// Corrupts one word but keeps a high confidence.
    pub silent_rate: f64,
    /// Per-table probability that one body row detection is displaced.
    pub displaced_row_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: DEFAULT_SEED,
            domains: DOMAINS.iter().map(|d| d.to_string()).collect(),
            tables_per_domain: 5,
            rows: (6, 13),
            cols: (3, 6),
            multi_word_rate: 0.15,
            blank_rate: 0.03,
            drop_rate: 0.03,
            corrupt_rate: 0.05,
            silent_rate: 0.005,
            displaced_row_rate: 0.3,
        }
    }
}

impl SynthConfig {
    /// One-word cells with no blanks and no injected errors.
    pub fn clean() -> Self {
        SynthConfig {
            multi_word_rate: 0.0,
            blank_rate: 0.0,
            drop_rate: 0.0,
            corrupt_rate: 0.0,
            silent_rate: 0.0,
            displaced_row_rate: 0.0,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTable {
    pub table_id: String,
    pub domain: String,
    pub tsr: TsrInput,
    pub ocr: OcrInput,
    pub gt: GtInput,
}

/// Errors injected into one table, for test diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Injected {
    pub dropped: usize,
    pub corrupted: usize,
    pub silent: usize,
    pub displaced_rows: usize,
    pub blanks: usize,
}

fn round_to(v: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (v * m).round() / m
}

fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(round_to(x0, 2), round_to(y0, 2), round_to(x1, 2), round_to(y1, 2)).expect("synthetic box is valid")
}

fn conf(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    round_to(rng.gen_range(lo..hi), 4)
}

fn vocabulary(domain: &str) -> (&'static [&'static str], &'static [&'static str]) {
    match domain {
        "computer_science" => (
            &[
                "Model", "Accuracy", "F1", "Params", "Latency", "Dataset", "Recall", "BLEU",
            ],
            &[
                "ResNet", "BERT", "baseline", "ours", "GPT", "LSTM", "ViT", "CNN", "large", "small",
            ],
        ),
        "materials_science" => (
            &[
                "Sample", "Density", "Hardness", "Modulus", "Tc", "Phase", "Strain", "Grain",
            ],
            &[
                "Al2O3", "TiN", "SiC", "steel", "annealed", "cubic", "bulk", "film", "ZrO2", "alloy",
            ],
        ),
        "biology" => (
            &["Gene", "Fold", "Pvalue", "Tissue", "Count", "Species", "Marker", "Dose"],
            &[
                "BRCA1", "TP53", "liver", "mouse", "human", "control", "treated", "EGFR", "MYC", "serum",
            ],
        ),
        _ => (
            &["Region", "Year", "Total", "Share", "Change", "Units", "Rate", "Income"],
            &[
                "North", "South", "East", "West", "urban", "rural", "total", "other", "EU", "US",
            ],
        ),
    }
}

fn body_word(rng: &mut ChaCha8Rng, words: &[&str], numeric: bool) -> String {
    if numeric {
        match rng.gen_range(0..3) {
            0 => format!("{:.1}", rng.gen_range(0.0..100.0)),
            1 => format!("{:.3}", rng.gen_range(0.0..1.0)),
            _ => format!("{}", rng.gen_range(1..5000)),
        }
    } else {
        words.choose(rng).expect("non-empty vocabulary").to_string()
    }
}

/// Replaces one character with a visually confusable one.
fn corrupt(rng: &mut ChaCha8Rng, word: &str) -> String {
    const SWAPS: [(char, char); 10] = [
        ('0', 'O'),
        ('1', 'l'),
        ('5', 'S'),
        ('8', 'B'),
        ('2', 'Z'),
        ('e', 'c'),
        ('a', 'o'),
        ('i', 'l'),
        ('n', 'm'),
        ('.', ','),
    ];
    let chars: Vec<char> = word.chars().collect();
    let candidates: Vec<usize> = (0..chars.len())
        .filter(|&i| SWAPS.iter().any(|(a, b)| chars[i] == *a || chars[i] == *b))
        .collect();
    let mut out = chars.clone();
    match candidates.choose(rng) {
        Some(&i) => {
            let (a, b) = *SWAPS.iter().find(|(a, b)| chars[i] == *a || chars[i] == *b).unwrap();
            out[i] = if chars[i] == a { b } else { a };
        }
        None => {
            let i = rng.gen_range(0..chars.len());
            out[i] = if chars[i] == 'x' { 'y' } else { 'x' };
        }
    }
    out.into_iter().collect()
}

struct Layout {
    page: ImageDims,
    col_x: Vec<f64>,
    row_y: Vec<f64>,
}

fn layout(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize) -> Layout {
    let margin = rng.gen_range(30.0..80.0);
    let mut col_x = vec![margin];
    for _ in 0..n_cols {
        let w = rng.gen_range(130.0..240.0);
        col_x.push(col_x.last().unwrap() + w);
    }
    let mut row_y = vec![margin];
    for _ in 0..n_rows {
        let h = rng.gen_range(34.0..46.0);
        row_y.push(row_y.last().unwrap() + h);
    }
    let page = ImageDims::new(
        round_to(col_x.last().unwrap() + margin, 0),
        round_to(row_y.last().unwrap() + margin, 0),
    )
    .expect("page dims");
    Layout { page, col_x, row_y }
}

/// Places words in a cell on one or two lines; returns boxes in reading order.
fn place_words(rng: &mut ChaCha8Rng, words: &[String], x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<BBox> {
    let h = y1 - y0;
    let lines: Vec<&[String]> = if words.len() > 1 && rng.gen_bool(0.5) {
        let split = words.len().div_ceil(2);
        vec![&words[..split], &words[split..]]
    } else {
        vec![words]
    };
    let line_h = if lines.len() == 1 { 0.55 * h } else { 0.34 * h };
    let tops: Vec<f64> = if lines.len() == 1 {
        vec![y0 + 0.22 * h]
    } else {
        vec![y0 + 0.12 * h, y0 + 0.54 * h]
    };
    let char_w = line_h * 0.45;
    let mut out = Vec::new();
    for (line, top) in lines.iter().zip(tops) {
        let mut x = x0 + rng.gen_range(4.0..9.0);
        for w in line.iter() {
            let width = (w.chars().count() as f64 * char_w).min(x1 - x - 3.0).max(4.0);
            out.push(bbox(x, top, x + width, top + line_h));
            x += width + char_w;
        }
    }
    out
}

pub fn generate_table(cfg: &SynthConfig, domain: &str, index: usize) -> (SynthTable, Injected) {
    let seed = crate::pipeline::domain_seed(cfg.seed, domain) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inj = Injected::default();
    let n_rows = rng.gen_range(cfg.rows.0..=cfg.rows.1);
    let n_cols = rng.gen_range(cfg.cols.0..=cfg.cols.1);
    let lay = layout(&mut rng, n_rows, n_cols);
    let (headers, words) = vocabulary(domain);
    let numeric: Vec<bool> = (0..n_cols).map(|c| c > 0 && rng.gen_bool(0.7)).collect();

    let scale = TSR_WIDTH / lay.page.width;
    let tsr_dims = ImageDims::new(TSR_WIDTH, round_to(lay.page.height * scale, 2)).expect("tsr dims");
    let (left, right) = (lay.col_x[0], *lay.col_x.last().unwrap());
    let (top, bottom) = (lay.row_y[0], *lay.row_y.last().unwrap());
    let jit = |rng: &mut ChaCha8Rng, v: f64, amp: f64| v + rng.gen_range(-amp..amp);

    let displaced = if n_rows > 2 && rng.gen_bool(cfg.displaced_row_rate) {
        inj.displaced_rows += 1;
        Some(rng.gen_range(1..n_rows - 1))
    } else {
        None
    };
    let mut rows = Vec::new();
    for r in 0..n_rows {
        let (y0, y1) = (lay.row_y[r], lay.row_y[r + 1]);
        let h = y1 - y0;
        let (y0, y1, c) = if displaced == Some(r) {
            let shift = h * rng.gen_range(0.6..0.75);
            (y0 + shift, y1 + shift, conf(&mut rng, 0.45, 0.7))
        } else {
            (
                jit(&mut rng, y0, 0.03 * h),
                jit(&mut rng, y1, 0.03 * h),
                conf(&mut rng, 0.85, 1.0),
            )
        };
        let b = bbox(
            jit(&mut rng, left, 3.0) * scale,
            y0 * scale,
            jit(&mut rng, right, 3.0) * scale,
            y1 * scale,
        );
        rows.push(StructureDetection::new(StructureKind::Row, b, c).expect("row"));
    }
    let mut columns = Vec::new();
    for c in 0..n_cols {
        let (x0, x1) = (lay.col_x[c], lay.col_x[c + 1]);
        let w = x1 - x0;
        let b = bbox(
            jit(&mut rng, x0, 0.02 * w) * scale,
            jit(&mut rng, top, 3.0) * scale,
            jit(&mut rng, x1, 0.02 * w) * scale,
            jit(&mut rng, bottom, 3.0) * scale,
        );
        let cf = conf(&mut rng, 0.85, 1.0);
        columns.push(StructureDetection::new(StructureKind::Column, b, cf).expect("column"));
    }

    let mut spans = Vec::new();
    let mut gt_cells = Vec::new();
    for r in 0..n_rows {
        for (c, &is_numeric) in numeric.iter().enumerate() {
            let (x0, x1, y0, y1) = (lay.col_x[c], lay.col_x[c + 1], lay.row_y[r], lay.row_y[r + 1]);
            let gt_box = bbox(x0, y0, x1, y1);
            if r > 0 && rng.gen_bool(cfg.blank_rate) {
                inj.blanks += 1;
                gt_cells.push(gt_cell(gt_box, r, c, String::new()));
                continue;
            }
            let cell_words: Vec<String> = if r == 0 {
                vec![headers.choose(&mut rng).unwrap().to_string()]
            } else if !is_numeric && rng.gen_bool(cfg.multi_word_rate) {
                (0..rng.gen_range(2..=3))
                    .map(|_| body_word(&mut rng, words, false))
                    .collect()
            } else {
                vec![body_word(&mut rng, words, is_numeric)]
            };
            gt_cells.push(gt_cell(gt_box, r, c, cell_words.join(" ")));
            let boxes = place_words(&mut rng, &cell_words, x0, y0, x1, y1);
            let mut cell_spans: Vec<OcrSpan> = cell_words
                .iter()
                .zip(boxes)
                .map(|(w, b)| {
                    let cf = conf(&mut rng, 0.9, 1.0);
                    OcrSpan::new(b, w.clone(), cf).expect("span")
                })
                .collect();
            if r == 0 {
                spans.extend(cell_spans);
                continue;
            }
            let roll: f64 = rng.gen();
            let i = rng.gen_range(0..cell_spans.len());
            if cell_spans.len() == 1 && roll < cfg.drop_rate {
                inj.dropped += 1;
                cell_spans.clear();
            } else if roll < cfg.drop_rate + cfg.corrupt_rate {
                inj.corrupted += 1;
                cell_spans[i].text = corrupt(&mut rng, &cell_spans[i].text);
                cell_spans[i].confidence = conf(&mut rng, 0.15, 0.55);
            } else if roll < cfg.drop_rate + cfg.corrupt_rate + cfg.silent_rate {
                inj.silent += 1;
                cell_spans[i].text = corrupt(&mut rng, &cell_spans[i].text);
            }
            spans.extend(cell_spans);
        }
    }
    spans.shuffle(&mut rng);

    let table = SynthTable {
        table_id: format!("{domain}-{index:02}"),
        domain: domain.to_string(),
        tsr: TsrInput {
            image: tsr_dims,
            rows,
            columns,
        },
        ocr: OcrInput { image: lay.page, spans },
        gt: GtInput { cells: gt_cells },
    };
    (table, inj)
}

fn gt_cell(bbox: BBox, r: usize, c: usize, text: String) -> GroundTruthCell {
    GroundTruthCell {
        bbox,
        start_row: r,
        start_col: c,
        end_row: r,
        end_col: c,
        text,
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<(SynthTable, Injected)> {
    cfg.domains
        .iter()
        .flat_map(|d| (0..cfg.tables_per_domain).map(move |i| generate_table(cfg, d, i)))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Page rendering of the true table: ruled cells with their ground-truth text.
pub fn render_svg(t: &SynthTable) -> String {
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
        w = t.ocr.image.width,
        h = t.ocr.image.height
    );
    for c in &t.gt.cells {
        let b = c.bbox;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#bbb\"/>\n",
            b.x0,
            b.y0,
            b.width(),
            b.height()
        ));
        if !c.text.is_empty() {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"{:.1}\">{}</text>\n",
                b.x0 + 6.0,
                b.y0 + 0.65 * b.height(),
                0.4 * b.height(),
                escape(&c.text)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `manifest.json` plus `tsr/`, `ocr/`, `gt/` and `img/` files; returns the manifest path.
pub fn write_corpus(dir: &Path, tables: &[SynthTable]) -> Result<PathBuf> {
    let mut jobs = Vec::new();
    for t in tables {
        let rel = |sub: &str| PathBuf::from(sub).join(format!("{}.json", t.table_id));
        write_text(&dir.join(rel("tsr")), &t.tsr.to_json())?;
        write_text(&dir.join(rel("ocr")), &t.ocr.to_json())?;
        write_text(&dir.join(rel("gt")), &t.gt.to_json())?;
        let img = PathBuf::from("img").join(format!("{}.svg", t.table_id));
        write_text(&dir.join(&img), &render_svg(t))?;
        jobs.push(TableJob {
            table_id: t.table_id.clone(),
            domain: t.domain.clone(),
            tsr_input: rel("tsr"),
            ocr_input: rel("ocr"),
            gt_input: Some(rel("gt")),
            image_ref: Some(img),
        });
    }
    let path = dir.join("manifest.json");
    write_json(&path, &Manifest { tables: jobs })?;
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| crate::Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, text).map_err(|e| crate::Error::io(format!("writing {}", path.display()), e))
}
