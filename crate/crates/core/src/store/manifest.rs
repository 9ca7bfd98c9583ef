use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embeddings::{load_embeddings, EmbeddingSet};
use crate::{OwlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    BaseTrain,
    BaseVal,
    SessionTrain,
    SessionTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub session_index: usize,
    pub role: Role,
    pub feature_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub labeled: bool,
}

/// `manifest.json`: the dataset's files grouped by session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: String,
    pub dim: usize,
    pub sessions: Vec<SessionManifest>,
    /// Directory relative paths are resolved against. Not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| OwlError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| OwlError::Format(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| OwlError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(OwlError::Format("manifest dim must be at least 1".into()));
        }
        for s in &self.sessions {
            let base = matches!(s.role, Role::BaseTrain | Role::BaseVal);
            if base && (!s.labeled || s.label_path.is_none()) {
                return Err(OwlError::Format(format!(
                    "{:?} entry must be labeled with a label_path",
                    s.role
                )));
            }
            if base != (s.session_index == 0) {
                return Err(OwlError::Format(format!(
                    "{:?} entry has session_index {}",
                    s.role, s.session_index
                )));
            }
        }
        self.entry(0, Role::BaseTrain)?;
        Ok(())
    }

    pub fn entry(&self, session_index: usize, role: Role) -> Result<&SessionManifest> {
        self.sessions
            .iter()
            .find(|s| s.session_index == session_index && s.role == role)
            .ok_or_else(|| {
                OwlError::Format(format!("manifest has no {role:?} entry for session {session_index}"))
            })
    }

    /// Indices of incremental sessions (≥ 1) in ascending order.
    pub fn open_sessions(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .sessions
            .iter()
            .filter(|s| s.session_index > 0)
            .map(|s| s.session_index)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Loads one entry. Labels are read whenever a label file is present,
    /// including for unlabeled roles where they serve as evaluation truth.
    pub fn load_set(&self, session_index: usize, role: Role) -> Result<EmbeddingSet> {
        let e = self.entry(session_index, role)?;
        let label_path = e.label_path.as_ref().map(|p| self.resolve(p));
        let set = load_embeddings(&self.resolve(&e.feature_path), label_path.as_deref())?;
        if set.dim() != self.dim {
            return Err(OwlError::Consistency(format!(
                "{} has width {} but manifest dim is {}",
                e.feature_path.display(),
                set.dim(),
                self.dim
            )));
        }
        Ok(set)
    }
}
