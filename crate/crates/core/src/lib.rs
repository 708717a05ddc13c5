//! Quantitative intrusiveness scoring for lane keeping assistance systems.
//!
//! Drive logs are resampled onto a fixed frame grid ([`ingest`]), split
//! into straight and curved sections ([`segmentation`]), turned into four
//! indicator series ([`derive`], [`pipeline`]) and compared between a
//! reference and a candidate setting with histogram intersection
//! ([`scoring`]). [`spectral`] looks for steering tremor and [`synthgen`]
//! produces drives with known properties.

pub mod derive;
mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod segmentation;
pub mod spectral;
pub mod storage;
pub mod synthgen;

pub use error::{Error, Result};
pub use model::*;
pub use pipeline::{analyze, AnalysisConfig, DriveAnalysis};
