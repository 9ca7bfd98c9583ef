//! The incremental classifier and its update strategies.
//!
//! All strategies act on the head over frozen embeddings: plain
//! fine-tuning, distillation from the previous head, an EWC anchor on head
//! parameters, herding-based exemplar replay, and few-shot prototype
//! extension.

mod classifier;
mod ewc;
mod fscil;
mod labeled;
mod replay;
mod train;

pub use classifier::{HeadKind, IncrementalClassifier};
pub use ewc::{compute_fisher, EwcState};
pub use fscil::fscil_update;
pub use labeled::LabeledRun;
pub use replay::{herding_select, ReplayBuffer};
pub use train::{epoch_order, init_base, train_linear, Distillation, Objective, Strategy, TrainConfig, TrainReport};

pub(crate) use train::class_targets;
