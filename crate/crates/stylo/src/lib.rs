//! Stylometry toolkit for authorship attribution (AA) and authorship
//! verification (AV).
//!
//! The crate is organized around a small pipeline:
//!
//! - [`corpus`]: documents, dataset statistics, exact deduplication, and
//!   reproducible train/validation/test splits.
//! - [`features`]: tokenization, text distortion, character/token n-gram
//!   vectorizers, and summary-statistic features.
//! - [`ppm`]: order-k prediction-by-partial-matching character models with
//!   cross-entropy scoring.
//! - [`linear`]: deterministic logistic regression and the per-family
//!   classifier ensemble.
//! - [`verify`]: author profiles, verification thresholds, unmasking,
//!   the imposters variant, and triplet-loss metric learning.
//! - [`metrics`]: accuracy, macro-accuracy, AUC, and the PAN-style
//!   verification metrics.
//! - [`harness`]: config-driven experiment runner with deterministic seeds,
//!   synthetic corpora, and machine-readable reports.
//!
//! Everything downstream of a seed is deterministic: the same corpus, config,
//! and seed reproduce byte-identical predictions.

pub mod corpus;
pub mod error;
pub mod features;
pub mod harness;
pub mod linear;
pub mod metrics;
pub mod ppm;
pub mod seeds;
pub mod verify;

pub use error::{Error, Result};

/// Toolkit version recorded in run records and reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
