use std::collections::BTreeMap;

use ndarray::Array2;

use super::classifier::IncrementalClassifier;
use crate::linalg::mean_of_rows;
use crate::store::EmbeddingSet;
use crate::{OwlError, Result};

/// Few-shot extension: one prototype per novel class from its `k` shots,
/// appended to the head without any gradient step.
///
/// Shot labels must cover `[C, C + N)` where `C` is the current class
/// count, each with exactly `k` samples.
pub fn fscil_update(clf: &IncrementalClassifier, shots: &EmbeddingSet, k: usize) -> Result<IncrementalClassifier> {
    if k == 0 {
        return Err(OwlError::Argument("shots per class must be at least 1".into()));
    }
    if shots.dim() != clf.dim() {
        return Err(OwlError::Shape(format!("shot width {} but head width {}", shots.dim(), clf.dim())));
    }
    let labels = shots.require_labels()?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let base = clf.class_count() as i64;
    let n_way = groups.len();
    for (expected, (&label, rows)) in (base..).zip(&groups) {
        if label != expected {
            return Err(OwlError::Data(format!(
                "novel labels must be dense from {base}; found {label} where {expected} was expected"
            )));
        }
        if rows.len() != k {
            return Err(OwlError::Data(format!("class {label} has {} shots, expected {k}", rows.len())));
        }
    }
    let x = shots.features_f64();
    let mut protos = Array2::zeros((n_way, clf.dim()));
    for (r, rows) in groups.values().enumerate() {
        protos.row_mut(r).assign(&mean_of_rows(x.view(), rows));
    }
    clf.extend_head(n_way, protos.view())
}
