use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{OwlError, Result};

/// Post-hoc score functions. Higher scores mean more in-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Maximum softmax probability.
    Msp,
    /// Maximum logit.
    Mls,
    /// `T · logsumexp(logits / T)`.
    Energy,
    /// Maximum softmax of temperature-scaled logits (ODIN without input perturbation).
    Tsoftmax,
    /// Negative minimum Mahalanobis distance to a class mean under a shared covariance.
    Mds,
    /// Max logit minus the scaled residual norm outside a principal subspace.
    Vim,
    /// Negative distance to the k-th nearest normalized training feature.
    Knn,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Msp,
        Method::Mls,
        Method::Energy,
        Method::Tsoftmax,
        Method::Mds,
        Method::Vim,
        Method::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Mls => "mls",
            Method::Energy => "energy",
            Method::Tsoftmax => "tsoftmax",
            Method::Mds => "mds",
            Method::Vim => "vim",
            Method::Knn => "knn",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            Method::Tsoftmax => 1000.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = OwlError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| OwlError::Config(format!("unknown scoring method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub method: Method,
    /// Unset means the method default (1000 for tsoftmax, 1 otherwise).
    pub temperature: Option<f64>,
    pub vim_variance_target: f64,
    pub vim_dim_override: Option<usize>,
    pub knn_k: usize,
    pub shrinkage_scale: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            method: Method::Msp,
            temperature: None,
            vim_variance_target: 0.90,
            vim_dim_override: None,
            knn_k: 50,
            shrinkage_scale: 1e-6,
        }
    }
}

impl ScorerConfig {
    pub fn new(method: Method) -> Self {
        ScorerConfig {
            method,
            ..Default::default()
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
            .unwrap_or_else(|| self.method.default_temperature())
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.temperature();
        if !(t > 0.0 && t.is_finite()) {
            return Err(OwlError::Config(format!("temperature must be positive, got {t}")));
        }
        if !(self.vim_variance_target > 0.0 && self.vim_variance_target <= 1.0) {
            return Err(OwlError::Config(format!(
                "vim_variance_target must lie in (0, 1], got {}",
                self.vim_variance_target
            )));
        }
        if self.vim_dim_override == Some(0) {
            return Err(OwlError::Config("vim_dim_override must be positive".into()));
        }
        if self.knn_k == 0 {
            return Err(OwlError::Config("knn_k must be at least 1".into()));
        }
        if !(self.shrinkage_scale > 0.0 && self.shrinkage_scale.is_finite()) {
            return Err(OwlError::Config("shrinkage_scale must be positive".into()));
        }
        Ok(())
    }
}
