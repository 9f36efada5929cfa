//! Uncertainty-aware table data extraction.
//!
//! Table-structure detections (rows and columns with confidences) and OCR
//! spans are merged into grid cells, each cell is scored with a conformal
//! non-conformity score, and cells whose uncertainty exceeds a threshold are
//! flagged for human verification. The [`evaluation`] module measures quality
//! before flagging, for the flags themselves, and after correction.

pub mod alignment;
pub mod conformal;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod geometry;
pub mod grid;
pub mod pipeline;
pub mod review;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
