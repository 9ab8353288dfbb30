//! Fairness-aware unsupervised anomaly detection.
//!
//! Each demographic group's normal data is pushed onto a shared truncated
//! isotropic Gaussian with entropic optimal transport; the anomaly score of a
//! sample is the norm of its embedding. The crate also carries the metric
//! suite (AUC, F1, ADPD, fairness ratio, EO), tabular ingestion with the
//! balanced/skewed split protocols, and a seeded experiment harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod ot;
pub mod target;
pub mod tensor;

pub use error::{FairadError, Result};
