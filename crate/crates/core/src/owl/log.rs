use serde::{Deserialize, Serialize};

/// Evaluation record of one session. Session 0 is the base session.
///
/// Rates are fractions in `[0, 1]`. Fields that need ground truth the
/// session did not provide are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLog {
    pub session_index: usize,
    pub n_input: usize,
    pub n_flagged_ood: usize,
    pub discovered_k: usize,
    pub new_class_ids: Vec<usize>,
    pub class_count: usize,
    pub threshold: f64,
    /// Known-class test samples accepted as ID and classified correctly.
    pub id_acc: Option<f64>,
    /// Unknown-class test samples rejected as OOD.
    pub ood_acc: Option<f64>,
    /// Accuracy over test samples of every class seen so far.
    pub session_acc: f64,
    /// Mean of `session_acc` over this and all earlier sessions.
    pub avg_acc: f64,
    /// Truly novel session inputs that were flagged OOD.
    pub unknown_recall: Option<f64>,
    /// Hungarian-matched accuracy of the discovered clusters on truly novel
    /// flagged inputs.
    pub cluster_acc: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub session_index: usize,
    pub n_input: usize,
    pub n_flagged_ood: usize,
    pub discovered_k: usize,
    pub new_class_ids: Vec<usize>,
    pub log: SessionLog,
}
