use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::linalg::sq_dist;
use crate::rng::{key, unit_at};
use crate::{Exec, OwlError, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

const SEEDING_STREAM: u64 = 0x4B50_5053; // "KPPS"

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster of each input row, in input order.
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Lloyd iterations run.
    pub iterations: usize,
    pub k: usize,
    /// Inertia after every assignment step, ending with the final one.
    pub inertia_trace: Vec<f64>,
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Seeding draws come from a counter RNG keyed by `(seed, round, id)` and
/// rows are processed in id order, so the result does not depend on the
/// order of the input rows. Iteration stops once no centroid moves more
/// than `tol` or after `max_iter` iterations. Empty clusters are re-seeded
/// at the point farthest from its centroid.
pub fn kmeans(x: ArrayView2<f64>, ids: &[u64], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterResult> {
    kmeans_with(Exec::default(), x, ids, k, seed, max_iter, tol)
}

pub fn kmeans_with(
    exec: Exec,
    x: ArrayView2<f64>,
    ids: &[u64],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult> {
    let m = x.nrows();
    if k == 0 || m < k {
        return Err(OwlError::Argument(format!("k-means needs 1 ≤ k ≤ M, got k={k}, M={m}")));
    }
    if ids.len() != m {
        return Err(OwlError::Argument(format!("{} ids for {m} rows", ids.len())));
    }
    if ids.iter().collect::<HashSet<_>>().len() != m {
        return Err(OwlError::Argument("sample ids must be unique".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OwlError::Argument("input contains non-finite values".into()));
    }
    if max_iter == 0 || !(tol >= 0.0) {
        return Err(OwlError::Argument("max_iter must be positive and tol non-negative".into()));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| ids[i]);
    let xs = x.select(Axis(0), &order);
    let sorted_ids: Vec<u64> = order.iter().map(|&i| ids[i]).collect();

    let mut centroids = seed_plus_plus(exec, xs.view(), &sorted_ids, k, seed);
    let mut trace = Vec::new();
    let mut iterations = 0;
    for iter in 1..=max_iter {
        let (labels, dists) = assign(exec, xs.view(), centroids.view());
        trace.push(chunked_sum(exec, &dists));
        let mut next = update(exec, xs.view(), &labels, k);
        repair_empty(xs.view(), &mut next, labels);
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), next.centroids.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next.centroids;
        iterations = iter;
        if shift <= tol {
            break;
        }
    }

    let (mut labels, mut dists) = assign(exec, xs.view(), centroids.view());
    let counts = counts(&labels, k);
    if counts.contains(&0) {
        let mut moved = Update {
            centroids: centroids.clone(),
            counts,
        };
        let moves = repair_empty(xs.view(), &mut moved, labels.clone());
        centroids = moved.centroids;
        for (i, c) in moves {
            labels[i] = c;
            dists[i] = 0.0;
        }
    }
    let inertia = chunked_sum(exec, &dists);
    trace.push(inertia);

    let mut assignments = vec![0; m];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = labels[pos];
    }
    Ok(ClusterResult {
        assignments,
        centroids,
        inertia,
        iterations,
        k,
        inertia_trace: trace,
    })
}

/// Recomputes `Σ ‖x_i − c_{a_i}‖²`.
pub fn inertia_of(x: ArrayView2<f64>, assignments: &[usize], centroids: ArrayView2<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(x.row(i), centroids.row(c)))
        .sum()
}

fn seed_plus_plus(exec: Exec, x: ArrayView2<f64>, ids: &[u64], k: usize, seed: u64) -> Array2<f64> {
    let m = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let mut chosen = vec![false; m];
    let mut nearest = vec![f64::INFINITY; m];
    for round in 0..k {
        let rk = key(seed, &[SEEDING_STREAM, round as u64]);
        // Exponential race: argmin −ln(u)/w picks i with probability ∝ w_i.
        let weighted = |use_weights: bool| {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                if chosen[i] {
                    continue;
                }
                let w = if use_weights { nearest[i] } else { 1.0 };
                if !(w > 0.0) {
                    continue;
                }
                let e = -unit_at(rk, ids[i]).ln() / w;
                if best.is_none_or(|(be, _)| e < be) {
                    best = Some((e, i));
                }
            }
            best.map(|(_, i)| i)
        };
        let pick = if round == 0 {
            weighted(false)
        } else {
            weighted(true).or_else(|| weighted(false))
        }
        .expect("m ≥ k leaves a candidate");
        chosen[pick] = true;
        centroids.row_mut(round).assign(&x.row(pick));
        let c = centroids.row(round);
        let d = exec.map(m, |i| sq_dist(x.row(i), c));
        for (n, di) in nearest.iter_mut().zip(d) {
            *n = n.min(di);
        }
    }
    centroids
}

fn assign(exec: Exec, x: ArrayView2<f64>, centroids: ArrayView2<f64>) -> (Vec<usize>, Vec<f64>) {
    let pairs = exec.map(x.nrows(), |i| {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, ctr) in centroids.axis_iter(Axis(0)).enumerate() {
            let d = sq_dist(x.row(i), ctr);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        (best, best_d)
    });
    pairs.into_iter().unzip()
}

fn chunked_sum(exec: Exec, v: &[f64]) -> f64 {
    exec.map_chunks(v.len(), |r| v[r].iter().sum::<f64>()).into_iter().sum()
}

fn counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &l in labels {
        c[l] += 1;
    }
    c
}

struct Update {
    centroids: Array2<f64>,
    counts: Vec<usize>,
}

fn update(exec: Exec, x: ArrayView2<f64>, labels: &[usize], k: usize) -> Update {
    let d = x.ncols();
    let partials = exec.map_chunks(x.nrows(), |range| {
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in range {
            let mut row = sums.row_mut(labels[i]);
            row += &x.row(i);
            counts[labels[i]] += 1;
        }
        (sums, counts)
    });
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums += &s;
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut row = sums.row_mut(c);
            row /= n as f64;
        }
    }
    Update {
        centroids: sums,
        counts,
    }
}

/// Moves the farthest points of clusters with at least two members into
/// empty clusters. Returns the `(row, cluster)` moves made.
fn repair_empty(x: ArrayView2<f64>, upd: &mut Update, mut labels: Vec<usize>) -> Vec<(usize, usize)> {
    let k = upd.counts.len();
    let mut moves = Vec::new();
    for empty in 0..k {
        if upd.counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for i in 0..x.nrows() {
            let c = labels[i];
            if upd.counts[c] < 2 {
                continue;
            }
            let d = sq_dist(x.row(i), upd.centroids.row(c));
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        let Some((_, i)) = best else { break };
        upd.counts[labels[i]] -= 1;
        upd.counts[empty] = 1;
        labels[i] = empty;
        let row: Array1<f64> = x.row(i).to_owned();
        upd.centroids.row_mut(empty).assign(&row);
        moves.push((i, empty));
    }
    moves
}
