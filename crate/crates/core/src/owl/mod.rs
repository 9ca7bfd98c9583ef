//! The session orchestrator.
//!
//! A run starts with [`run_base`] on labeled base data and then applies
//! [`run_open_session`] once per incoming batch: score, split at the
//! calibrated threshold, cluster the unknown part, register and learn the
//! new classes, and evaluate on every class seen so far.

mod config;
mod log;
mod pipeline;

pub use config::OwlConfig;
pub use log::{SessionLog, SessionOutcome};
pub use pipeline::{evaluate, merge_small_clusters, run_base, run_open_session};
