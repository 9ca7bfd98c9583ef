use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};

use super::npy;
use crate::{OwlError, Result};

/// Label value marking an unlabeled sample.
pub const UNLABELED: i64 = -1;

/// An N×d block of embeddings with optional labels and stable sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    features: Array2<f32>,
    labels: Option<Vec<i64>>,
    ids: Vec<u64>,
}

impl EmbeddingSet {
    /// Builds a set with ids `0..N`.
    pub fn new(features: Array2<f32>, labels: Option<Vec<i64>>) -> Result<Self> {
        let ids = (0..features.nrows() as u64).collect();
        Self::with_ids(features, labels, ids)
    }

    pub fn with_ids(features: Array2<f32>, labels: Option<Vec<i64>>, ids: Vec<u64>) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(OwlError::Shape("embedding dimension must be at least 1".into()));
        }
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(OwlError::Consistency(format!(
                    "{} feature rows but {} labels",
                    features.nrows(),
                    l.len()
                )));
            }
            if let Some(bad) = l.iter().find(|&&v| v < UNLABELED) {
                return Err(OwlError::Data(format!("invalid label {bad}")));
            }
        }
        if ids.len() != features.nrows() {
            return Err(OwlError::Consistency(format!(
                "{} feature rows but {} ids",
                features.nrows(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(OwlError::Consistency(format!("duplicate sample id {dup}")));
        }
        if let Some((i, _)) = features
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
        {
            return Err(OwlError::Data(format!("row {i} contains a non-finite value")));
        }
        Ok(EmbeddingSet {
            features,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    /// Features widened to f64, the precision all computation runs in.
    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Labels, failing with a data error when absent or partially unlabeled.
    pub fn require_labels(&self) -> Result<&[i64]> {
        let labels = self
            .labels
            .as_deref()
            .ok_or_else(|| OwlError::Data("labels are required".into()))?;
        if labels.contains(&UNLABELED) {
            return Err(OwlError::Data("every sample must be labeled".into()));
        }
        Ok(labels)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingSet {
        let features = self.features.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        EmbeddingSet {
            features,
            labels,
            ids,
        }
    }

    /// Replaces labels, keeping features and ids.
    pub fn relabeled(&self, labels: Vec<i64>) -> Result<EmbeddingSet> {
        Self::with_ids(self.features.clone(), Some(labels), self.ids.clone())
    }

    /// Drops labels.
    pub fn unlabeled(&self) -> EmbeddingSet {
        EmbeddingSet {
            features: self.features.clone(),
            labels: None,
            ids: self.ids.clone(),
        }
    }

    /// Stacks sets with matching widths. Ids are re-assigned `0..N` when the
    /// concatenation would contain duplicates.
    pub fn concat(parts: &[&EmbeddingSet]) -> Result<EmbeddingSet> {
        let first = parts
            .first()
            .ok_or_else(|| OwlError::Argument("nothing to concatenate".into()))?;
        let dim = first.dim();
        if parts.iter().any(|p| p.dim() != dim) {
            return Err(OwlError::Shape("embedding widths differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views).expect("widths checked");
        let labels = if parts.iter().all(|p| p.labels.is_some()) {
            Some(parts.iter().flat_map(|p| p.labels.clone().unwrap()).collect())
        } else {
            None
        };
        let mut ids: Vec<u64> = parts.iter().flat_map(|p| p.ids.iter().copied()).collect();
        let unique: HashSet<_> = ids.iter().collect();
        if unique.len() != ids.len() {
            ids = (0..ids.len() as u64).collect();
        }
        Self::with_ids(features, labels, ids)
    }
}

/// Reads features (and labels when a path is given) from NPY files.
pub fn load_embeddings(feature_path: &Path, label_path: Option<&Path>) -> Result<EmbeddingSet> {
    let features = npy::read_f32_matrix(feature_path)?;
    let labels = label_path.map(npy::read_i64_vector).transpose()?;
    EmbeddingSet::new(features, labels)
}

/// Writes features (and labels when a path is given) as NPY files.
pub fn save_embeddings(set: &EmbeddingSet, feature_path: &Path, label_path: Option<&Path>) -> Result<()> {
    npy::write_f32_matrix(feature_path, &set.features)?;
    if let Some(lp) = label_path {
        let labels = set
            .labels
            .as_ref()
            .ok_or_else(|| OwlError::Argument("label path given for an unlabeled set".into()))?;
        npy::write_i64_vector(lp, labels)?;
    }
    Ok(())
}
