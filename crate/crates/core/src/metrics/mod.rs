//! Evaluation metrics: detection (AUROC, AUPR, FPR at a TPR), accuracy
//! family, clustering agreement and session aggregates. All functions are
//! pure.

mod classification;
mod clustering;
mod detection;
mod session;

pub use classification::{accuracy, confusion, per_class_accuracy};
pub use clustering::{cluster_accuracy, cluster_matching, nmi, purity};
pub use detection::{aupr_in, auroc, fpr_at_tpr, DetectionReport};
pub use session::{avg_accuracy, forgetting, round_half_up};
