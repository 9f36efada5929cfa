//! Input file schemas, the job manifest and JSON helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::alignment::OcrSpan;
use crate::error::{Error, Result};
use crate::evaluation::GroundTruthCell;
use crate::geometry::{BBox, ImageDims};
use crate::grid::{StructureDetection, StructureKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDims {
    width: f64,
    height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawStructure {
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTsr {
    image: RawDims,
    rows: Vec<RawStructure>,
    columns: Vec<RawStructure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpan {
    bbox: [f64; 4],
    text: String,
    confidence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawOcr {
    image: RawDims,
    spans: Vec<RawSpan>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGtCell {
    bbox: [f64; 4],
    start_row: usize,
    start_col: usize,
    end_row: usize,
    end_col: usize,
    text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGt {
    cells: Vec<RawGtCell>,
}

/// Row and column detections in the TSR model's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TsrInput {
    pub image: ImageDims,
    pub rows: Vec<StructureDetection>,
    pub columns: Vec<StructureDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrInput {
    pub image: ImageDims,
    pub spans: Vec<OcrSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInput {
    pub cells: Vec<GroundTruthCell>,
}

fn dims(raw: &RawDims) -> Result<ImageDims> {
    ImageDims::new(raw.width, raw.height).map_err(|e| e.within("image"))
}

fn bbox(raw: [f64; 4], at: &str) -> Result<BBox> {
    BBox::try_from(raw).map_err(|e| e.within(at))
}

fn structures(raw: &[RawStructure], kind: StructureKind, name: &str) -> Result<Vec<StructureDetection>> {
    raw.iter()
        .enumerate()
        .map(|(i, s)| {
            let at = format!("{name}[{i}]");
            StructureDetection::new(kind, bbox(s.bbox, &at)?, s.confidence).map_err(|e| e.within(&at))
        })
        .collect()
}

impl TsrInput {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawTsr = parse_json(text, "TSR input")?;
        Ok(TsrInput {
            image: dims(&raw.image)?,
            rows: structures(&raw.rows, StructureKind::Row, "rows")?,
            columns: structures(&raw.columns, StructureKind::Column, "columns")?,
        })
    }

    pub fn to_json(&self) -> String {
        let raw = RawTsr {
            image: RawDims {
                width: self.image.width,
                height: self.image.height,
            },
            rows: self
                .rows
                .iter()
                .map(|d| RawStructure {
                    bbox: d.bbox.into(),
                    confidence: d.confidence,
                })
                .collect(),
            columns: self
                .columns
                .iter()
                .map(|d| RawStructure {
                    bbox: d.bbox.into(),
                    confidence: d.confidence,
                })
                .collect(),
        };
        to_pretty(&raw)
    }
}

impl OcrInput {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawOcr = parse_json(text, "OCR input")?;
        let spans = raw
            .spans
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let at = format!("spans[{i}]");
                OcrSpan::new(bbox(s.bbox, &at)?, s.text.clone(), s.confidence).map_err(|e| e.within(&at))
            })
            .collect::<Result<_>>()?;
        Ok(OcrInput {
            image: dims(&raw.image)?,
            spans,
        })
    }

    pub fn to_json(&self) -> String {
        let raw = RawOcr {
            image: RawDims {
                width: self.image.width,
                height: self.image.height,
            },
            spans: self
                .spans
                .iter()
                .map(|s| RawSpan {
                    bbox: s.bbox.into(),
                    text: s.text.clone(),
                    confidence: s.confidence,
                })
                .collect(),
        };
        to_pretty(&raw)
    }
}

impl GtInput {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawGt = parse_json(text, "ground-truth input")?;
        let cells = raw
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let at = format!("cells[{i}]");
                let cell = GroundTruthCell {
                    bbox: bbox(c.bbox, &at)?,
                    start_row: c.start_row,
                    start_col: c.start_col,
                    end_row: c.end_row,
                    end_col: c.end_col,
                    text: c.text.clone(),
                };
                cell.validate().map_err(|e| e.within(&at))?;
                Ok(cell)
            })
            .collect::<Result<_>>()?;
        Ok(GtInput { cells })
    }

    pub fn to_json(&self) -> String {
        let raw = RawGt {
            cells: self
                .cells
                .iter()
                .map(|c| RawGtCell {
                    bbox: c.bbox.into(),
                    start_row: c.start_row,
                    start_col: c.start_col,
                    end_row: c.end_row,
                    end_col: c.end_col,
                    text: c.text.clone(),
                })
                .collect(),
        };
        to_pretty(&raw)
    }
}

/// One table to process. Paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJob {
    pub table_id: String,
    /// Grouping tag used for per-domain splits and reports.
    #[serde(default = "default_domain")]
    pub domain: String,
    pub tsr_input: PathBuf,
    pub ocr_input: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<PathBuf>,
}

fn default_domain() -> String {
    "default".to_string()
}

impl TableJob {
    pub fn load_tsr(&self) -> Result<TsrInput> {
        TsrInput::from_json(&read_text(&self.tsr_input)?).map_err(|e| e.within(&self.table_id))
    }

    pub fn load_ocr(&self) -> Result<OcrInput> {
        OcrInput::from_json(&read_text(&self.ocr_input)?).map_err(|e| e.within(&self.table_id))
    }

    pub fn load_gt(&self) -> Result<Option<GtInput>> {
        match &self.gt_input {
            None => Ok(None),
            Some(p) => GtInput::from_json(&read_text(p)?)
                .map(Some)
                .map_err(|e| e.within(&self.table_id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tables: Vec<TableJob>,
}

impl Manifest {
    /// Loads a manifest, resolving relative paths and checking table ids are unique.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Manifest = parse_json(&read_text(path)?, "manifest")?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let mut seen = std::collections::BTreeSet::new();
        for (i, job) in m.tables.iter_mut().enumerate() {
            let id = &job.table_id;
            if id.is_empty()
                || id.starts_with('.')
                || !id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
            {
                return Err(Error::schema(
                    format!("tables[{i}].table_id"),
                    format!("`{id}` must be non-empty ASCII letters, digits, '.', '_' or '-'"),
                ));
            }
            if !seen.insert(job.table_id.clone()) {
                return Err(Error::schema(
                    format!("tables[{i}].table_id"),
                    format!("duplicate id `{}`", job.table_id),
                ));
            }
            resolve(&mut job.tsr_input);
            resolve(&mut job.ocr_input);
            if let Some(p) = job.gt_input.as_mut() {
                resolve(p);
            }
            if let Some(p) = job.image_ref.as_mut() {
                resolve(p);
            }
        }
        if m.tables.is_empty() {
            return Err(Error::degenerate("manifest lists no tables"));
        }
        Ok(m)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        context: format!("parsing {what}"),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize infallibly");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, to_pretty(value)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
