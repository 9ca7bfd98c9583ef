//! Post-hoc out-of-distribution scoring.
//!
//! Every score follows one convention: higher means more in-distribution.
//! A [`FittedScorer`] holds whatever statistics its method needs, and its
//! calibrated threshold splits a batch into ID (`score ≥ τ`) and OOD parts.

mod config;
mod scorer;
mod threshold;

pub use config::{Method, ScorerConfig};
pub use scorer::{
    calibrate_threshold, is_validation_id, precision_factor, shrunk_covariance, FittedScorer, Subspace,
};
pub use threshold::{split_by_threshold, threshold_for_tpr};
