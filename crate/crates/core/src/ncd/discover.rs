use ndarray::{Array2, ArrayView2};

use super::kmeans::{kmeans_with, ClusterResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::sq_dist;
use crate::store::EmbeddingSet;
use crate::{Exec, OwlError, Result};

/// Upper bound on auto-k: `min(⌈√M⌉, 20)`.
pub fn default_k_max(m: usize) -> usize {
    ((m as f64).sqrt().ceil() as usize).min(20)
}

/// Mean silhouette coefficient with Euclidean distances.
///
/// Points in singleton clusters score 0, as do points whose intra- and
/// nearest inter-cluster mean distances are both 0.
pub fn silhouette(x: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    silhouette_with(Exec::default(), x, labels, k)
}

pub fn silhouette_with(exec: Exec, x: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    let m = x.nrows();
    if m == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let per_point = exec.map(m, |i| {
        let own = labels[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for j in 0..m {
            if j != i {
                sums[labels[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            return 0.0;
        }
        let denom = a.max(b);
        if denom == 0.0 {
            0.0
        } else {
            (b - a) / denom
        }
    });
    per_point.iter().sum::<f64>() / m as f64
}

/// Picks `k ∈ [k_min, k_max]` maximizing the mean silhouette of a k-means
/// partition; ties keep the smaller `k`.
pub fn estimate_k(x: ArrayView2<f64>, ids: &[u64], k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    estimate_k_with(Exec::default(), x, ids, k_min, k_max, seed)
}

pub fn estimate_k_with(
    exec: Exec,
    x: ArrayView2<f64>,
    ids: &[u64],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<usize> {
    let m = x.nrows();
    if k_min < 2 || k_max < k_min {
        return Err(OwlError::Argument(format!("need 2 ≤ k_min ≤ k_max, got {k_min}..{k_max}")));
    }
    if m < k_max + 1 {
        return Err(OwlError::Argument(format!("{m} samples are too few for k_max = {k_max}")));
    }
    let mut best_k = k_min;
    let mut best_s = f64::NEG_INFINITY;
    for k in k_min..=k_max {
        let res = kmeans_with(exec, x, ids, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
        let s = silhouette_with(exec, x, &res.assignments, k);
        log::debug!("auto-k: k={k} silhouette={s:.6}");
        if s > best_s {
            best_s = s;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Provisional classes found among unknown samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    /// Cluster id in `[0, k)` per input row.
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub k: usize,
}

impl From<ClusterResult> for Discovery {
    fn from(r: ClusterResult) -> Self {
        Discovery {
            labels: r.assignments,
            centroids: r.centroids,
            k: r.k,
        }
    }
}

/// Clusters unknown samples into provisional classes: k-means with the given
/// `k`, or with `k` chosen by [`estimate_k`] over `[2, min(⌈√M⌉, 20, M−1)]`
/// when absent. Auto-k on two samples yields one class.
pub fn discover(unknown: &EmbeddingSet, k: Option<usize>, seed: u64) -> Result<Discovery> {
    discover_with(Exec::default(), unknown, k, seed)
}

pub fn discover_with(exec: Exec, unknown: &EmbeddingSet, k: Option<usize>, seed: u64) -> Result<Discovery> {
    let m = unknown.len();
    if m < 2 {
        return Err(OwlError::Data(format!("discovery needs at least 2 samples, got {m}")));
    }
    let x = unknown.features_f64();
    let ids = unknown.ids();
    let k = match k {
        Some(k) => k,
        None => {
            let k_max = default_k_max(m).min(m - 1);
            if k_max < 2 {
                1
            } else {
                estimate_k_with(exec, x.view(), ids, 2, k_max, seed)?
            }
        }
    };
    Ok(kmeans_with(exec, x.view(), ids, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?.into())
}

/// Like [`discover`], but a single sample becomes one class of its own.
pub fn discover_or_singleton(unknown: &EmbeddingSet, k: Option<usize>, seed: u64) -> Result<Discovery> {
    if unknown.len() == 1 {
        return Ok(Discovery {
            labels: vec![0],
            centroids: unknown.features_f64(),
            k: 1,
        });
    }
    discover(unknown, k, seed)
}
