use std::collections::BTreeMap;

use ndarray::Array2;

use crate::ncd::hungarian;
use crate::{OwlError, Result};

struct Contingency {
    table: Array2<f64>,
    n: f64,
}

fn contingency(a: &[i64], b: &[i64]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(OwlError::Argument(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    let index = |v: &[i64]| -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for &x in v {
            let next = m.len();
            m.entry(x).or_insert(next);
        }
        m
    };
    let (ia, ib) = (index(a), index(b));
    let mut table = Array2::zeros((ia.len(), ib.len()));
    for (x, y) in a.iter().zip(b) {
        table[(ia[x], ib[y])] += 1.0;
    }
    Ok(Contingency {
        table,
        n: a.len() as f64,
    })
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * (c / n).ln()).sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two single-cluster labelings score 1.
pub fn nmi(a: &[i64], b: &[i64]) -> Result<f64> {
    let ct = contingency(a, b)?;
    if ct.n == 0.0 {
        return Err(OwlError::Argument("no samples".into()));
    }
    let rows: Vec<f64> = ct.table.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = ct.table.columns().into_iter().map(|c| c.sum()).collect();
    let ha = entropy(rows.iter().copied(), ct.n);
    let hb = entropy(cols.iter().copied(), ct.n);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for ((i, j), &nij) in ct.table.indexed_iter() {
        if nij > 0.0 {
            mi += nij / ct.n * ((ct.n * nij) / (rows[i] * cols[j])).ln();
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// Fraction of samples belonging to the majority truth class of their cluster.
pub fn purity(pred_clusters: &[i64], truth: &[i64]) -> Result<f64> {
    let ct = contingency(pred_clusters, truth)?;
    if ct.n == 0.0 {
        return Err(OwlError::Argument("no samples".into()));
    }
    let majority: f64 = ct
        .table
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .sum();
    Ok(majority / ct.n)
}

/// Best one-to-one matching between clusters and classes, via the
/// assignment solver on the zero-padded overlap matrix.
pub fn cluster_accuracy(pred_clusters: &[i64], truth: &[i64]) -> Result<f64> {
    Ok(cluster_matching(pred_clusters, truth)?.0)
}

/// Accuracy together with the matched `(cluster, class)` pairs. Clusters
/// matched only to padding are omitted.
pub fn cluster_matching(pred_clusters: &[i64], truth: &[i64]) -> Result<(f64, Vec<(i64, i64)>)> {
    let ct = contingency(pred_clusters, truth)?;
    if ct.n == 0.0 {
        return Err(OwlError::Argument("no samples".into()));
    }
    let (kp, kt) = ct.table.dim();
    let n = kp.max(kt);
    let mut cost = Array2::zeros((n, n));
    for ((i, j), &v) in ct.table.indexed_iter() {
        cost[(i, j)] = -v;
    }
    let (assignment, total) = hungarian(cost.view())?;

    let order = |v: &[i64]| -> Vec<i64> {
        let mut seen = Vec::new();
        for &x in v {
            if !seen.contains(&x) {
                seen.push(x);
            }
        }
        seen
    };
    let (pa, pb) = (order(pred_clusters), order(truth));
    let pairs = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < kp && j < kt)
        .map(|(i, &j)| (pa[i], pb[j]))
        .collect();
    Ok((-total / ct.n, pairs))
}
