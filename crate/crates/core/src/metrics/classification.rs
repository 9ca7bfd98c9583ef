use std::collections::BTreeMap;

use ndarray::Array2;

use crate::{OwlError, Result};

fn check(pred: &[i64], truth: &[i64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(OwlError::Argument(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(OwlError::Argument("no samples to evaluate".into()));
    }
    Ok(())
}

pub fn accuracy(pred: &[i64], truth: &[i64]) -> Result<f64> {
    check(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy restricted to each true class.
pub fn per_class_accuracy(pred: &[i64], truth: &[i64]) -> Result<BTreeMap<i64, f64>> {
    check(pred, truth)?;
    let mut tally: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let e = tally.entry(*t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    Ok(tally.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect())
}

/// C×C counts, rows indexed by true class and columns by prediction, with
/// `C = 1 + max label`. Labels must be non-negative.
pub fn confusion(pred: &[i64], truth: &[i64]) -> Result<Array2<usize>> {
    check(pred, truth)?;
    if let Some(bad) = pred.iter().chain(truth).find(|&&l| l < 0) {
        return Err(OwlError::Argument(format!("negative label {bad}")));
    }
    let c = pred.iter().chain(truth).copied().max().unwrap_or(0) as usize + 1;
    let mut m = Array2::zeros((c, c));
    for (p, t) in pred.iter().zip(truth) {
        m[(*t as usize, *p as usize)] += 1;
    }
    Ok(m)
}
