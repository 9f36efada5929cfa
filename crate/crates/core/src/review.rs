//! Human verification state for the review service.
//!
//! The service starts from the snapshot written by `evaluate` and an
//! append-only log of correction events. Current state is a pure fold of the
//! log over the snapshot, so replaying the log on restart reproduces it
//! exactly. Only flagged cells can receive a verdict, and each only once.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::evaluation::{compute_report, text_matches, CellKey, EvaluationReport, LabeledCell};
use crate::geometry::BBox;

/// A held-out cell as evaluated in batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCell {
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
    pub text: String,
    pub score: f64,
    pub uncertainty: f64,
    pub flagged: bool,
    pub correct: bool,
    pub gt_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTable {
    pub table_id: String,
    pub domain: String,
    pub image_ref: Option<String>,
    pub cells: Vec<ReviewCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSnapshot {
    pub q_hat: f64,
    pub tau: f64,
    pub similarity_threshold: f64,
    pub tables: Vec<ReviewTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Correct,
    Unresolvable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Accepted,
    Corrected,
    Unresolvable,
}

/// Body of a correction request; the cell comes from the request path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub reviewer_text: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub seq: u64,
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub verdict: Verdict,
    pub reviewer_text: Option<String>,
    pub timestamp: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReviewError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{table_id}` has no held-out cell ({row}, {col})")]
    UnknownCell { table_id: String, row: usize, col: usize },
    #[error("cell ({row}, {col}) of `{table_id}` is not flagged for review")]
    NotFlagged { table_id: String, row: usize, col: usize },
    #[error("cell ({row}, {col}) of `{table_id}` was already reviewed")]
    AlreadyReviewed { table_id: String, row: usize, col: usize },
    #[error("a `correct` verdict needs reviewer_text")]
    MissingText,
    #[error("event sequence {got} does not follow {expected}")]
    OutOfOrder { expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellState {
    status: CellStatus,
    text: String,
    correct: bool,
}

/// Current view of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellView {
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
    pub text: String,
    pub original_text: String,
    pub score: f64,
    pub uncertainty: f64,
    /// Still awaiting review.
    pub flagged: bool,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub table_id: String,
    pub domain: String,
    pub cells: usize,
    pub flagged: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
    pub text: String,
    pub uncertainty: f64,
    pub score: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainLive {
    pub cells: usize,
    pub reviewed: usize,
    pub remaining_flagged: usize,
    pub current_error_rate: f64,
    pub labor_savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub reviewed: usize,
    pub remaining_flagged: usize,
    /// Incorrect cells right now, after every verdict so far, over all cells.
    pub current_error_rate: f64,
    pub labor_savings: f64,
    pub per_domain: BTreeMap<String, DomainLive>,
    /// Batch-style report with the verdicts so far taken as the correction step.
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewSession {
    snapshot: ReviewSnapshot,
    index: BTreeMap<CellKey, (usize, usize)>,
    state: BTreeMap<CellKey, CellState>,
    events: Vec<CorrectionEvent>,
}

impl ReviewSession {
    pub fn new(snapshot: ReviewSnapshot) -> Result<Self, Error> {
        let mut index = BTreeMap::new();
        let mut state = BTreeMap::new();
        for (ti, t) in snapshot.tables.iter().enumerate() {
            for (ci, c) in t.cells.iter().enumerate() {
                let key = CellKey::new(t.table_id.clone(), c.row, c.col);
                if index.insert(key.clone(), (ti, ci)).is_some() {
                    return Err(Error::schema(
                        format!("tables[{ti}].cells[{ci}]"),
                        format!("duplicate cell ({}, {}) in `{}`", c.row, c.col, t.table_id),
                    ));
                }
                state.insert(
                    key,
                    CellState {
                        status: CellStatus::Pending,
                        text: c.text.clone(),
                        correct: c.correct,
                    },
                );
            }
        }
        Ok(ReviewSession {
            snapshot,
            index,
            state,
            events: Vec::new(),
        })
    }

    pub fn replay(snapshot: ReviewSnapshot, events: impl IntoIterator<Item = CorrectionEvent>) -> Result<Self, Error> {
        let mut s = Self::new(snapshot)?;
        for e in events {
            s.apply(e).map_err(|e| Error::degenerate(format!("event log: {e}")))?;
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> &ReviewSnapshot {
        &self.snapshot
    }

    pub fn events(&self) -> &[CorrectionEvent] {
        &self.events
    }

    pub fn next_seq(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    fn cell(&self, key: &CellKey) -> Option<&ReviewCell> {
        self.index.get(key).map(|&(t, c)| &self.snapshot.tables[t].cells[c])
    }

    /// Checks that a request for `key` would be accepted, without applying it.
    pub fn check(&self, key: &CellKey, req: &CorrectionRequest) -> Result<(), ReviewError> {
        if !self.snapshot.tables.iter().any(|t| t.table_id == key.table_id) {
            return Err(ReviewError::UnknownTable(key.table_id.clone()));
        }
        let cell = self.cell(key).ok_or_else(|| ReviewError::UnknownCell {
            table_id: key.table_id.clone(),
            row: key.row,
            col: key.col,
        })?;
        if !cell.flagged {
            return Err(ReviewError::NotFlagged {
                table_id: key.table_id.clone(),
                row: key.row,
                col: key.col,
            });
        }
        if self.state[key].status != CellStatus::Pending {
            return Err(ReviewError::AlreadyReviewed {
                table_id: key.table_id.clone(),
                row: key.row,
                col: key.col,
            });
        }
        if req.verdict == Verdict::Correct && req.reviewer_text.is_none() {
            return Err(ReviewError::MissingText);
        }
        Ok(())
    }

    /// Builds the next event for a validated request.
    pub fn event_for(&self, key: &CellKey, req: CorrectionRequest, timestamp: String) -> CorrectionEvent {
        CorrectionEvent {
            seq: self.next_seq(),
            table_id: key.table_id.clone(),
            row: key.row,
            col: key.col,
            verdict: req.verdict,
            reviewer_text: req.reviewer_text,
            timestamp: req.timestamp.unwrap_or(timestamp),
        }
    }

    pub fn apply(&mut self, event: CorrectionEvent) -> Result<(), ReviewError> {
        if event.seq != self.next_seq() {
            return Err(ReviewError::OutOfOrder {
                expected: self.next_seq(),
                got: event.seq,
            });
        }
        let key = CellKey::new(event.table_id.clone(), event.row, event.col);
        let req = CorrectionRequest {
            verdict: event.verdict,
            reviewer_text: event.reviewer_text.clone(),
            timestamp: None,
        };
        self.check(&key, &req)?;
        let gt_text = self.cell(&key).and_then(|c| c.gt_text.clone());
        let sim = self.snapshot.similarity_threshold;
        let st = self.state.get_mut(&key).expect("checked");
        match event.verdict {
            Verdict::Accept => st.status = CellStatus::Accepted,
            Verdict::Unresolvable => st.status = CellStatus::Unresolvable,
            Verdict::Correct => {
                let text = event.reviewer_text.clone().expect("checked");
                st.correct = gt_text.is_some_and(|g| text_matches(&text, &g, sim));
                st.text = text;
                st.status = CellStatus::Corrected;
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn tables(&self) -> Vec<TableSummary> {
        self.snapshot
            .tables
            .iter()
            .map(|t| {
                let flagged = t.cells.iter().filter(|c| c.flagged).count();
                let pending = t
                    .cells
                    .iter()
                    .filter(|c| c.flagged && self.status(&t.table_id, c) == CellStatus::Pending)
                    .count();
                TableSummary {
                    table_id: t.table_id.clone(),
                    domain: t.domain.clone(),
                    cells: t.cells.len(),
                    flagged,
                    pending,
                }
            })
            .collect()
    }

    pub fn table(&self, table_id: &str) -> Option<&ReviewTable> {
        self.snapshot.tables.iter().find(|t| t.table_id == table_id)
    }

    fn status(&self, table_id: &str, c: &ReviewCell) -> CellStatus {
        self.state[&CellKey::new(table_id, c.row, c.col)].status
    }

    /// Current cells of a table; with `flagged_only`, just those still awaiting review.
    pub fn cells(&self, table_id: &str, flagged_only: bool) -> Option<Vec<CellView>> {
        let t = self.table(table_id)?;
        Some(
            t.cells
                .iter()
                .map(|c| {
                    let st = &self.state[&CellKey::new(table_id, c.row, c.col)];
                    CellView {
                        row: c.row,
                        col: c.col,
                        bbox: c.bbox,
                        text: st.text.clone(),
                        original_text: c.text.clone(),
                        score: c.score,
                        uncertainty: c.uncertainty,
                        flagged: c.flagged && st.status == CellStatus::Pending,
                        status: st.status,
                    }
                })
                .filter(|v| !flagged_only || v.flagged)
                .collect(),
        )
    }

    /// Pending flagged cells, highest uncertainty first, ties by `(table_id, row, col)`.
    pub fn queue(&self) -> Vec<QueueItem> {
        let mut items: Vec<QueueItem> = self
            .snapshot
            .tables
            .iter()
            .flat_map(|t| {
                t.cells
                    .iter()
                    .filter(|c| c.flagged && self.status(&t.table_id, c) == CellStatus::Pending)
                    .map(|c| QueueItem {
                        table_id: t.table_id.clone(),
                        row: c.row,
                        col: c.col,
                        bbox: c.bbox,
                        text: c.text.clone(),
                        uncertainty: c.uncertainty,
                        score: c.score,
                        status: CellStatus::Pending,
                    })
            })
            .collect();
        items.sort_by(|a, b| {
            b.uncertainty
                .total_cmp(&a.uncertainty)
                .then_with(|| (&a.table_id, a.row, a.col).cmp(&(&b.table_id, b.row, b.col)))
        });
        items
    }

    pub fn live_metrics(&self) -> Result<LiveMetrics, Error> {
        let mut labeled = Vec::new();
        let mut corrected = std::collections::BTreeSet::new();
        let mut domains: BTreeMap<String, (usize, usize, usize, usize, usize)> = BTreeMap::new();
        for t in &self.snapshot.tables {
            for c in &t.cells {
                let key = CellKey::new(t.table_id.clone(), c.row, c.col);
                let st = &self.state[&key];
                if st.status == CellStatus::Corrected && st.correct {
                    corrected.insert(key.clone());
                }
                let d = domains.entry(t.domain.clone()).or_default();
                d.0 += 1;
                d.1 += usize::from(st.status != CellStatus::Pending);
                d.2 += usize::from(c.flagged && st.status == CellStatus::Pending);
                d.3 += usize::from(!st.correct);
                d.4 += usize::from(c.flagged);
                labeled.push(LabeledCell {
                    key,
                    flagged: c.flagged,
                    correct: c.correct,
                });
            }
        }
        let report = compute_report(&labeled, &corrected)?;
        let per_domain: BTreeMap<String, DomainLive> = domains
            .into_iter()
            .map(|(d, (n, reviewed, remaining, incorrect, flagged))| {
                (
                    d,
                    DomainLive {
                        cells: n,
                        reviewed,
                        remaining_flagged: remaining,
                        current_error_rate: incorrect as f64 / n as f64,
                        labor_savings: (n - flagged) as f64 / n as f64,
                    },
                )
            })
            .collect();
        let n: usize = per_domain.values().map(|d| d.cells).sum();
        let incorrect = self.state.values().filter(|s| !s.correct).count();
        Ok(LiveMetrics {
            reviewed: per_domain.values().map(|d| d.reviewed).sum(),
            remaining_flagged: per_domain.values().map(|d| d.remaining_flagged).sum(),
            current_error_rate: incorrect as f64 / n as f64,
            labor_savings: report.labor_savings,
            per_domain,
            report,
        })
    }

    /// Canonical serialization of the mutable state, for replay comparisons.
    pub fn state_bytes(&self) -> Vec<u8> {
        let view: Vec<(&CellKey, &CellState)> = self.state.iter().collect();
        serde_json::to_vec(&(view, &self.events)).expect("state serializes")
    }
}

/// Append-only NDJSON event log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        EventLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Vec<CorrectionEvent>, Error> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(format!("reading {}", self.path.display()), e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| Error::Json {
                    context: format!("{} line {}", self.path.display(), i + 1),
                    source,
                })
            })
            .collect()
    }

    /// Appends and syncs one event before returning.
    pub fn append(&self, event: &CorrectionEvent) -> Result<(), Error> {
        let ctx = || format!("appending to {}", self.path.display());
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(ctx(), e))?;
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| Error::io(ctx(), e))?;
        f.sync_data().map_err(|e| Error::io(ctx(), e))
    }
}
