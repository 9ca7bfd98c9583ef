use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::classifier::{HeadKind, IncrementalClassifier};
use super::ewc::EwcState;
use super::replay::ReplayBuffer;
use crate::linalg::{logsumexp, mean_of_rows, softmax};
use crate::rng::{key, unit_at};
use crate::store::EmbeddingSet;
use crate::{OwlError, Result};

const SHUFFLE_STREAM: u64 = 0x5348_5546; // "SHUF"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Prototype extension only; predictions by nearest class mean.
    Ncm,
    #[default]
    Finetune,
    Lwf,
    Ewc,
    Icarl,
    FscilProto,
}

impl Strategy {
    /// Whether evaluation uses nearest-class-mean rather than the head.
    pub fn predicts_by_ncm(self) -> bool {
        matches!(self, Strategy::Ncm | Strategy::Icarl | Strategy::FscilProto)
    }

    /// Whether incremental updates run gradient steps.
    pub fn trains_head(self) -> bool {
        matches!(self, Strategy::Finetune | Strategy::Lwf | Strategy::Ewc | Strategy::Icarl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lambda_lwf: f64,
    pub kd_temperature: f64,
    pub lambda_ewc: f64,
    pub replay_budget_m: usize,
    pub head: HeadKind,
    pub cosine_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Finetune,
            epochs: 50,
            lr: 0.01,
            weight_decay: 5e-4,
            batch_size: 64,
            lambda_lwf: 1.0,
            kd_temperature: 2.0,
            lambda_ewc: 100.0,
            replay_budget_m: 20,
            head: HeadKind::Linear,
            cosine_scale: 16.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("kd_temperature", self.kd_temperature),
            ("cosine_scale", self.cosine_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OwlError::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("weight_decay", self.weight_decay),
            ("lambda_lwf", self.lambda_lwf),
            ("lambda_ewc", self.lambda_ewc),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OwlError::Argument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.replay_budget_m == 0 {
            return Err(OwlError::Argument(
                "epochs, batch_size and replay_budget_m must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Knowledge-distillation term against a frozen earlier head.
#[derive(Debug, Clone)]
pub struct Distillation {
    /// Old-head logits for every training row (N×C_old).
    pub old_logits: Array2<f64>,
    pub lambda: f64,
    pub temperature: f64,
}

/// The training loss over a fixed data set:
///
/// ```text
/// L = mean_i CE(softmax(z_i), y_i)
///   + λ_kd · T² · mean_i KL(softmax(z_i^old / T) ‖ softmax(z_i[..C_old] / T))
///   + (λ_ewc / 2) · Σ_j F_j (θ_j − θ*_j)²
///   + (wd / 2) · ‖W‖²
/// ```
///
/// The EWC sum runs over the leading entries of the flat parameter vector
/// that existed when the anchor was taken.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [usize],
    pub distill: Option<Distillation>,
    pub ewc: Option<(&'a EwcState, f64)>,
    pub weight_decay: f64,
}

impl Objective<'_> {
    pub fn loss(&self, clf: &IncrementalClassifier, rows: &[usize]) -> f64 {
        self.evaluate(clf, rows, false).0
    }

    /// Loss and its gradient in the flat `[W_c, b_c]` layout.
    pub fn loss_and_grad(&self, clf: &IncrementalClassifier, rows: &[usize]) -> (f64, Vec<f64>) {
        let (loss, grad) = self.evaluate(clf, rows, true);
        (loss, grad.expect("gradient requested"))
    }

    fn evaluate(&self, clf: &IncrementalClassifier, rows: &[usize], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let c = clf.class_count();
        let d = clf.dim();
        let stride = d + 1;
        let mut grad = want_grad.then(|| vec![0.0; c * stride]);
        let mut loss = 0.0;
        let inv_b = 1.0 / rows.len().max(1) as f64;
        let (w_scale, use_bias) = match clf.head_kind() {
            HeadKind::Linear => (1.0, true),
            HeadKind::Cosine => (clf.cosine_scale(), false),
        };

        for &i in rows {
            let input = clf.head_input(self.x.row(i));
            let z = clf.logits_prepared(input.view());
            let y = self.y[i];
            loss += logsumexp(z.view()) - z[y];
            let mut gz = softmax(z.view());
            gz[y] -= 1.0;

            if let Some(kd) = &self.distill {
                let c_old = kd.old_logits.ncols();
                let t = kd.temperature;
                let zs = z.slice(ndarray::s![..c_old]).mapv(|v| v / t);
                let zo = kd.old_logits.row(i).mapv(|v| v / t);
                let (lse_s, lse_o) = (logsumexp(zs.view()), logsumexp(zo.view()));
                let q = softmax(zo.view());
                let p = softmax(zs.view());
                let kl: f64 = (0..c_old)
                    .filter(|&k| q[k] > 0.0)
                    .map(|k| q[k] * ((zo[k] - lse_o) - (zs[k] - lse_s)))
                    .sum();
                loss += kd.lambda * t * t * kl;
                for k in 0..c_old {
                    gz[k] += kd.lambda * t * (p[k] - q[k]);
                }
            }

            if let Some(g) = grad.as_mut() {
                for k in 0..c {
                    let coef = gz[k] * inv_b;
                    let block = &mut g[k * stride..(k + 1) * stride];
                    for (gj, xj) in block[..d].iter_mut().zip(input.iter()) {
                        *gj += coef * w_scale * xj;
                    }
                    if use_bias {
                        block[d] += coef;
                    }
                }
            }
        }
        loss *= inv_b;

        if self.weight_decay > 0.0 {
            let wd = self.weight_decay;
            loss += 0.5 * wd * clf.weights().iter().map(|w| w * w).sum::<f64>();
            if let Some(g) = grad.as_mut() {
                for k in 0..c {
                    for j in 0..d {
                        g[k * stride + j] += wd * clf.weights()[(k, j)];
                    }
                }
            }
        }

        if let Some((ewc, lambda)) = self.ewc {
            let theta = clf.flat_params();
            loss += ewc.penalty(&theta, lambda);
            if let Some(g) = grad.as_mut() {
                ewc.add_gradient(&theta, lambda, g);
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean mini-batch loss per epoch, measured before each step.
    pub loss_trace: Vec<f64>,
}

/// Epoch permutation drawn from the counter RNG keyed on `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let k = key(seed, &[SHUFFLE_STREAM, epoch as u64]);
    let mut keyed: Vec<(u64, usize)> = (0..n).map(|i| (unit_at(k, i as u64).to_bits(), i)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Mini-batch SGD on the head.
///
/// `old_head` adds distillation on its classes (skipped when
/// `cfg.lambda_lwf` is zero), `ewc` adds the quadratic anchor weighted by
/// `cfg.lambda_ewc`, and `replay` appends stored exemplars to the data.
pub fn train_linear(
    clf: &IncrementalClassifier,
    x: ArrayView2<f64>,
    y: &[usize],
    cfg: &TrainConfig,
    old_head: Option<&IncrementalClassifier>,
    ewc: Option<&EwcState>,
    replay: Option<&ReplayBuffer>,
) -> Result<(IncrementalClassifier, TrainReport)> {
    cfg.validate()?;
    if x.ncols() != clf.dim() {
        return Err(OwlError::Shape(format!("data width {} but head width {}", x.ncols(), clf.dim())));
    }
    if x.nrows() != y.len() {
        return Err(OwlError::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
    }

    let (x_all, y_all): (Array2<f64>, Vec<usize>) = match replay.filter(|r| !r.is_empty()) {
        Some(r) => {
            let (rx, ry) = r.training_set(clf.dim());
            let xs = ndarray::concatenate(Axis(0), &[x, rx.view()]).expect("widths checked");
            (xs, y.iter().copied().chain(ry).collect())
        }
        None => (x.to_owned(), y.to_vec()),
    };
    if x_all.nrows() == 0 {
        return Err(OwlError::Argument("no training data".into()));
    }
    if let Some(&bad) = y_all.iter().find(|&&t| t >= clf.class_count()) {
        return Err(OwlError::Argument(format!(
            "target {bad} outside the head's {} classes",
            clf.class_count()
        )));
    }

    let distill = match old_head {
        Some(old) if cfg.lambda_lwf > 0.0 => {
            if old.class_count() > clf.class_count() || old.dim() != clf.dim() {
                return Err(OwlError::Shape("old head does not fit inside the new head".into()));
            }
            Some(Distillation {
                old_logits: old.logits_batch(x_all.view())?,
                lambda: cfg.lambda_lwf,
                temperature: cfg.kd_temperature,
            })
        }
        _ => None,
    };
    let objective = Objective {
        x: x_all.view(),
        y: &y_all,
        distill,
        ewc: ewc.map(|e| (e, cfg.lambda_ewc)),
        weight_decay: cfg.weight_decay,
    };

    let mut current = clf.clone();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, x_all.nrows());
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = objective.loss_and_grad(&current, batch);
            let mut theta = current.flat_params();
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= cfg.lr * g;
            }
            current = current.with_flat_params(&theta)?;
            current.renormalize();
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() {
            return Err(OwlError::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        report.loss_trace.push(mean);
    }
    Ok((current, report))
}

/// Converts dense non-negative labels to class indices.
pub(crate) fn class_targets(labels: &[i64]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&l| {
            usize::try_from(l).map_err(|_| OwlError::Data(format!("label {l} is not a class id")))
        })
        .collect()
}

/// Per-class means for labels dense in `[0, C)`.
pub(crate) fn class_means(x: ArrayView2<f64>, y: &[usize], c: usize) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &t) in y.iter().enumerate() {
        rows[t].push(i);
    }
    if let Some(k) = rows.iter().position(Vec::is_empty) {
        return Err(OwlError::Data(format!("class {k} has no samples")));
    }
    let mut means = Array2::zeros((c, x.ncols()));
    for (k, r) in rows.iter().enumerate() {
        means.row_mut(k).assign(&mean_of_rows(x, r));
    }
    Ok(means)
}

/// Base-session classifier: prototypes are class means, head rows start at
/// the prototypes and are then trained with [`train_linear`].
pub fn init_base(train: &EmbeddingSet, cfg: &TrainConfig) -> Result<IncrementalClassifier> {
    cfg.validate()?;
    let y = class_targets(train.require_labels()?)?;
    let c = y.iter().max().map_or(0, |m| m + 1);
    if c == 0 {
        return Err(OwlError::Data("base training set is empty".into()));
    }
    let x = train.features_f64();
    let means = class_means(x.view(), &y, c)?;
    let clf = IncrementalClassifier::from_prototypes(means, cfg.head, cfg.cosine_scale)?;
    let (trained, _) = train_linear(&clf, x.view(), &y, cfg, None, None, None)?;
    Ok(trained)
}
