use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::classifier::{HeadKind, IncrementalClassifier};
use crate::linalg::softmax;
use crate::{OwlError, Result};

/// Diagonal Fisher information and the parameters it was measured at,
/// both in the classifier's flat `[W_c, b_c]` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub fisher_diag: Vec<f64>,
    pub theta_star: Vec<f64>,
}

impl EwcState {
    /// `(λ/2) Σ F_i (θ_i − θ*_i)²` over the anchored prefix of `theta`.
    pub fn penalty(&self, theta: &[f64], lambda: f64) -> f64 {
        let s: f64 = self
            .fisher_diag
            .iter()
            .zip(&self.theta_star)
            .zip(theta)
            .map(|((f, t0), t)| f * (t - t0) * (t - t0))
            .sum();
        0.5 * lambda * s
    }

    pub(crate) fn add_gradient(&self, theta: &[f64], lambda: f64, grad: &mut [f64]) {
        for (i, (f, t0)) in self.fisher_diag.iter().zip(&self.theta_star).enumerate() {
            grad[i] += lambda * f * (theta[i] - t0);
        }
    }

    /// Accumulates Fisher information from an earlier anchor into a newer
    /// one. The newer anchor's parameters become `theta_star`.
    pub fn accumulate(&self, newer: EwcState) -> EwcState {
        let mut fisher = newer.fisher_diag;
        for (f, old) in fisher.iter_mut().zip(&self.fisher_diag) {
            *f += old;
        }
        EwcState {
            fisher_diag: fisher,
            theta_star: newer.theta_star,
        }
    }
}

/// Empirical Fisher diagonal: the mean over samples of the squared gradient
/// of `log p(y | x)`, anchored at the classifier's current parameters.
pub fn compute_fisher(clf: &IncrementalClassifier, x: ArrayView2<f64>, y: &[usize]) -> Result<EwcState> {
    if x.nrows() == 0 {
        return Err(OwlError::Argument("Fisher information needs at least one sample".into()));
    }
    if x.nrows() != y.len() || x.ncols() != clf.dim() {
        return Err(OwlError::Shape("data does not match classifier".into()));
    }
    let c = clf.class_count();
    let d = clf.dim();
    let stride = d + 1;
    let (w_scale, use_bias) = match clf.head_kind() {
        HeadKind::Linear => (1.0, true),
        HeadKind::Cosine => (clf.cosine_scale(), false),
    };
    let mut fisher = vec![0.0; c * stride];
    for (i, &target) in y.iter().enumerate() {
        if target >= c {
            return Err(OwlError::Argument(format!("target {target} outside {c} classes")));
        }
        let input = clf.head_input(x.row(i));
        let mut g = softmax(clf.logits_prepared(input.view()).view());
        g[target] -= 1.0;
        for k in 0..c {
            let block = &mut fisher[k * stride..(k + 1) * stride];
            for (f, xj) in block[..d].iter_mut().zip(input.iter()) {
                let gj = g[k] * w_scale * xj;
                *f += gj * gj;
            }
            if use_bias {
                block[d] += g[k] * g[k];
            }
        }
    }
    let n = x.nrows() as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    Ok(EwcState {
        fisher_diag: fisher,
        theta_star: clf.flat_params(),
    })
}
