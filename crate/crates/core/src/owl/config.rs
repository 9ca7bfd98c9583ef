use serde::{Deserialize, Serialize};

use crate::cil::TrainConfig;
use crate::ood::ScorerConfig;
use crate::{OwlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OwlConfig {
    pub scorer: ScorerConfig,
    pub target_tpr: f64,
    /// Number of novel classes per session; estimated when absent.
    pub ncd_k: Option<usize>,
    pub cil: TrainConfig,
    /// Also train on ID-flagged samples, labeled by the current head.
    pub include_pseudo_id: bool,
    pub seed: u64,
    /// Refit the scorer from the replay buffer after each session instead
    /// of only appending new class statistics.
    pub full_refit: bool,
}

impl Default for OwlConfig {
    fn default() -> Self {
        OwlConfig {
            scorer: ScorerConfig::default(),
            target_tpr: 0.95,
            ncd_k: None,
            cil: TrainConfig::default(),
            include_pseudo_id: false,
            seed: 0,
            full_refit: false,
        }
    }
}

impl OwlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_tpr > 0.0 && self.target_tpr < 1.0) {
            return Err(OwlError::Config(format!("target_tpr must lie in (0, 1), got {}", self.target_tpr)));
        }
        if self.ncd_k == Some(0) {
            return Err(OwlError::Config("ncd_k must be positive".into()));
        }
        self.scorer.validate()?;
        self.cil.validate().map_err(|e| OwlError::Config(e.to_string()))
    }
}
