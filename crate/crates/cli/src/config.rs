use std::collections::BTreeMap;
use std::path::Path;

use owlkit::cil::TrainConfig;
use owlkit::ood::ScorerConfig;
use owlkit::owl::OwlConfig;
use owlkit::{OwlError, Result};
use serde::Deserialize;

/// The `[owl]` table: session-loop settings that are not scorer or
/// classifier options.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OwlSection {
    pub target_tpr: f64,
    pub ncd_k: Option<usize>,
    pub include_pseudo_id: bool,
    pub seed: u64,
    pub full_refit: bool,
}

impl Default for OwlSection {
    fn default() -> Self {
        let d = OwlConfig::default();
        OwlSection {
            target_tpr: d.target_tpr,
            ncd_k: d.ncd_k,
            include_pseudo_id: d.include_pseudo_id,
            seed: d.seed,
            full_refit: d.full_refit,
        }
    }
}

/// The `[report]` table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Group name to the OOD dataset names (file stems) averaged under it.
    pub groups: BTreeMap<String, Vec<String>>,
    /// True-positive rate at which the false-positive rate is reported.
    pub tpr: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            groups: BTreeMap::new(),
            tpr: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scorer: ScorerConfig,
    pub cil: TrainConfig,
    pub owl: OwlSection,
    pub report: ReportSection,
}

impl Config {
    /// Reads a TOML config; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| OwlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text).map_err(|e| OwlError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn owl(&self, seed: Option<u64>) -> OwlConfig {
        OwlConfig {
            scorer: self.scorer.clone(),
            target_tpr: self.owl.target_tpr,
            ncd_k: self.owl.ncd_k,
            cil: self.cil.clone(),
            include_pseudo_id: self.owl.include_pseudo_id,
            seed: seed.unwrap_or(self.owl.seed),
            full_refit: self.owl.full_refit,
        }
    }

    pub fn seed(&self, seed: Option<u64>) -> u64 {
        seed.unwrap_or(self.owl.seed)
    }
}
