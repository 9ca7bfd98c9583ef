//! Open-world learning over pre-extracted feature embeddings.
//!
//! The engine runs a session loop over batches of embeddings: score each
//! sample with a post-hoc out-of-distribution detector, split the batch into
//! known and unknown samples at a calibrated threshold, cluster the unknown
//! part into provisional classes, grow the classifier head with those
//! classes and evaluate on everything seen so far.
//!
//! Modules:
//!
//! * [`store`]: embeddings, NPY files, manifests, class registry and state directories.
//! * [`ood`]: score functions, scorer fitting and threshold calibration.
//! * [`ncd`]: k-means, silhouette-based cluster count estimation, Hungarian assignment.
//! * [`cil`]: the incremental classifier and its update strategies.
//! * [`owl`]: the session orchestrator.
//! * [`metrics`]: detection, classification and clustering metrics.
//! * [`synth`]: deterministic Gaussian scenarios for end-to-end checks.
//!
//! Data-parallel inner loops (batch scoring, Lloyd assignment, silhouette)
//! run on rayon when the `parallel` feature is on; every parallel path has a
//! sequential twin selected through [`Exec`] and both produce bit-identical
//! results.

// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cil;
mod error;
mod exec;
pub mod linalg;
pub mod metrics;
pub mod ncd;
pub mod ood;
pub mod owl;
pub mod rng;
pub mod store;
pub mod synth;

pub use error::{OwlError, Result};
pub use exec::Exec;
