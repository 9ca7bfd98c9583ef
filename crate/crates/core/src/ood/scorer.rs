use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::config::{Method, ScorerConfig};
use super::threshold::threshold_for_tpr;
use crate::cil::IncrementalClassifier;
use crate::linalg::{
    cholesky_lower, dot, logsumexp, mean_of_rows, norm, normalize_rows, normalized, softmax, spd_inverse,
    sq_dist, symmetric_eigen_desc,
};
use crate::store::EmbeddingSet;
use crate::{Exec, OwlError, Result};

/// Samples whose id satisfies this go to the calibration split.
pub fn is_validation_id(id: u64) -> bool {
    id % 10 == 7
}

/// Principal subspace statistics used by the ViM score.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    /// d×p matrix with orthonormal columns.
    pub basis: Array2<f64>,
    pub mean: Array1<f64>,
    pub alpha: f64,
}

impl Subspace {
    /// Norm of the component of `x − mean` orthogonal to the basis.
    pub fn residual(&self, x: ArrayView1<f64>) -> f64 {
        let centered = &x - &self.mean;
        let coords = self.basis.t().dot(&centered);
        let projected = self.basis.dot(&coords);
        norm((&centered - &projected).view())
    }
}

/// An immutable fitted scoring artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScorer {
    pub config: ScorerConfig,
    /// C×d class means.
    pub class_means: Array2<f64>,
    /// Lower-triangular `L` with `L Lᵀ = Σ⁻¹` (mds only).
    pub precision_factor: Option<Array2<f64>>,
    pub subspace: Option<Subspace>,
    /// Row-normalized training features (knn only).
    pub train_features: Option<Array2<f64>>,
    pub threshold: Option<f64>,
    pub id_val_scores: Vec<f64>,
}

impl FittedScorer {
    /// Fits the statistics `config.method` needs on labeled training data.
    ///
    /// Samples with `id % 10 == 7` are held out and their scores kept in
    /// `id_val_scores` for calibration; statistics come from the rest. When
    /// the held-out part is empty the whole set is scored instead.
    pub fn fit(config: &ScorerConfig, train: &EmbeddingSet, classifier: &IncrementalClassifier) -> Result<Self> {
        config.validate()?;
        let labels = train.require_labels()?;
        let c = classifier.class_count();
        if train.dim() != classifier.dim() {
            return Err(OwlError::Shape(format!(
                "training width {} but classifier width {}",
                train.dim(),
                classifier.dim()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < 0 || l as usize >= c) {
            return Err(OwlError::Data(format!("label {bad} is outside the classifier's {c} classes")));
        }
        let x = train.features_f64();
        let (val_rows, mut fit_rows): (Vec<usize>, Vec<usize>) =
            (0..train.len()).partition(|&i| is_validation_id(train.ids()[i]));
        if fit_rows.is_empty() {
            fit_rows = val_rows.clone();
        }
        if fit_rows.is_empty() {
            return Err(OwlError::Data("empty training set".into()));
        }

        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for &i in &fit_rows {
            per_class[labels[i] as usize].push(i);
        }
        let mut all_per_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &l) in labels.iter().enumerate() {
            all_per_class[l as usize].push(i);
        }
        if config.method == Method::Mds {
            if let Some(k) = (0..c).find(|&k| all_per_class[k].len() < 2) {
                return Err(OwlError::Data(format!("class {k} has fewer than 2 samples")));
            }
        }
        let mut class_means = Array2::<f64>::zeros((c, train.dim()));
        for k in 0..c {
            let mean = if !per_class[k].is_empty() {
                mean_of_rows(x.view(), &per_class[k])
            } else if !all_per_class[k].is_empty() {
                mean_of_rows(x.view(), &all_per_class[k])
            } else {
                classifier.prototypes().row(k).to_owned()
            };
            class_means.row_mut(k).assign(&mean);
        }

        let mut scorer = FittedScorer {
            config: config.clone(),
            class_means,
            precision_factor: None,
            subspace: None,
            train_features: None,
            threshold: None,
            id_val_scores: Vec::new(),
        };
        let fit_x = x.select(Axis(0), &fit_rows);
        match config.method {
            Method::Mds => {
                let centered = Array2::from_shape_fn(fit_x.raw_dim(), |(r, j)| {
                    fit_x[(r, j)] - scorer.class_means[(labels[fit_rows[r]] as usize, j)]
                });
                scorer.precision_factor = Some(precision_factor(centered.view(), config.shrinkage_scale)?);
            }
            Method::Vim => {
                let logits = classifier.logits_batch(fit_x.view())?;
                scorer.subspace = Some(fit_subspace(fit_x.view(), logits.view(), config)?);
            }
            Method::Knn => scorer.train_features = Some(normalize_rows(fit_x.view())),
            _ => {}
        }

        let score_rows = if val_rows.is_empty() { &fit_rows } else { &val_rows };
        let val_x = x.select(Axis(0), score_rows);
        scorer.id_val_scores = scorer.score_batch(classifier, val_x.view())?;
        Ok(scorer)
    }

    /// Copy with the threshold set to the largest value keeping
    /// `target_tpr` of the validation scores at or above it.
    pub fn calibrated(&self, target_tpr: f64) -> Result<Self> {
        let mut out = self.clone();
        out.threshold = Some(calibrate_threshold(self, target_tpr)?);
        Ok(out)
    }

    pub fn class_count(&self) -> usize {
        self.class_means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.class_means.ncols()
    }

    /// Scores one sample from its feature vector and classifier logits.
    pub fn score(&self, feature: ArrayView1<f64>, logits: ArrayView1<f64>) -> Result<f64> {
        if feature.len() != self.dim() {
            return Err(OwlError::Shape(format!(
                "feature width {} but scorer width {}",
                feature.len(),
                self.dim()
            )));
        }
        if logits.len() != self.class_count() {
            return Err(OwlError::Shape(format!(
                "{} logits but scorer knows {} classes",
                logits.len(),
                self.class_count()
            )));
        }
        Ok(self.score_unchecked(feature, logits))
    }

    fn score_unchecked(&self, feature: ArrayView1<f64>, logits: ArrayView1<f64>) -> f64 {
        let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self.config.method {
            Method::Msp => max_softmax(logits, 1.0),
            Method::Tsoftmax => max_softmax(logits, self.config.temperature()),
            Method::Mls => max_logit,
            Method::Energy => {
                let t = self.config.temperature();
                t * logsumexp(logits.mapv(|z| z / t).view())
            }
            Method::Mds => {
                let l = self.precision_factor.as_ref().expect("mds scorer has a precision factor");
                let best = self
                    .class_means
                    .axis_iter(Axis(0))
                    .map(|mu| {
                        let diff = &feature - &mu;
                        // ‖Lᵀ (x − μ)‖²
                        let proj = l.t().dot(&diff);
                        dot(proj.view(), proj.view())
                    })
                    .fold(f64::INFINITY, f64::min);
                -best.sqrt()
            }
            Method::Vim => {
                let sub = self.subspace.as_ref().expect("vim scorer has a subspace");
                max_logit - sub.alpha * sub.residual(feature)
            }
            Method::Knn => {
                let bank = self.train_features.as_ref().expect("knn scorer has a feature bank");
                let x = normalized(feature);
                let mut d: Vec<f64> = bank.axis_iter(Axis(0)).map(|r| sq_dist(x.view(), r)).collect();
                if d.is_empty() {
                    return f64::NEG_INFINITY;
                }
                let k = self.config.knn_k.min(d.len()) - 1;
                let (_, kth, _) = d.select_nth_unstable_by(k, f64::total_cmp);
                0.0 - kth.sqrt()
            }
        }
    }

    /// Scores every row of `x`, in row order.
    pub fn score_batch(&self, classifier: &IncrementalClassifier, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.score_batch_with(Exec::default(), classifier, x)
    }

    pub fn score_batch_with(
        &self,
        exec: Exec,
        classifier: &IncrementalClassifier,
        x: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() || classifier.dim() != self.dim() || classifier.class_count() != self.class_count() {
            return Err(OwlError::Shape(format!(
                "batch is {}-wide with {} classes; scorer is {}-wide with {} classes",
                x.ncols(),
                classifier.class_count(),
                self.dim(),
                self.class_count()
            )));
        }
        Ok(exec.map(x.nrows(), |i| {
            let logits = classifier.logits_prepared(classifier.head_input(x.row(i)).view());
            self.score_unchecked(x.row(i), logits.view())
        }))
    }

    /// Adds classes discovered after fitting. Covariance and subspace
    /// statistics are kept; the knn bank gains the new samples.
    pub fn with_new_classes(&self, means: ArrayView2<f64>, samples: ArrayView2<f64>) -> Result<Self> {
        if means.ncols() != self.dim() || samples.ncols() != self.dim() {
            return Err(OwlError::Shape("new class statistics have the wrong width".into()));
        }
        let mut out = self.clone();
        out.class_means = ndarray::concatenate(Axis(0), &[self.class_means.view(), means]).expect("widths checked");
        if let Some(bank) = &self.train_features {
            let extra = normalize_rows(samples);
            out.train_features =
                Some(ndarray::concatenate(Axis(0), &[bank.view(), extra.view()]).expect("widths checked"));
        }
        Ok(out)
    }
}

/// Threshold for `target_tpr` over the scorer's validation scores.
pub fn calibrate_threshold(scorer: &FittedScorer, target_tpr: f64) -> Result<f64> {
    threshold_for_tpr(&scorer.id_val_scores, target_tpr)
}

fn max_softmax(logits: ArrayView1<f64>, t: f64) -> f64 {
    let p = softmax(logits.mapv(|z| z / t).view());
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Cholesky factor of the inverse of the shrunk covariance of `centered` rows.
pub fn precision_factor(centered: ArrayView2<f64>, shrinkage_scale: f64) -> Result<Array2<f64>> {
    let sigma = shrunk_covariance(centered, shrinkage_scale);
    let precision = spd_inverse(sigma.view())
        .map_err(|_| OwlError::Numeric("shared covariance is singular despite shrinkage".into()))?;
    cholesky_lower(precision.view())
}

/// `Σ + ε I` with `Σ = XᵀX / N` and `ε = scale · trace(Σ) / d`.
pub fn shrunk_covariance(centered: ArrayView2<f64>, shrinkage_scale: f64) -> Array2<f64> {
    let n = centered.nrows().max(1) as f64;
    let d = centered.ncols();
    let mut sigma = centered.t().dot(&centered) / n;
    let eps = shrinkage_scale * sigma.diag().sum() / d as f64;
    for j in 0..d {
        sigma[(j, j)] += eps;
    }
    sigma
}

fn fit_subspace(x: ArrayView2<f64>, logits: ArrayView2<f64>, config: &ScorerConfig) -> Result<Subspace> {
    let n = x.nrows();
    let d = x.ncols();
    let rows: Vec<usize> = (0..n).collect();
    let mean = mean_of_rows(x, &rows);
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let (values, vectors) = symmetric_eigen_desc(cov.view());
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let p = match config.vim_dim_override {
        Some(p) => p.min(d),
        None if total <= 0.0 => 1,
        None => {
            let mut acc = 0.0;
            let mut p = d;
            for (i, v) in values.iter().enumerate() {
                acc += v.max(0.0);
                if acc >= config.vim_variance_target * total {
                    p = i + 1;
                    break;
                }
            }
            p
        }
    };
    let basis = vectors.slice(ndarray::s![.., ..p]).to_owned();
    let mut sub = Subspace {
        basis,
        mean,
        alpha: 1.0,
    };
    let mean_residual = x.axis_iter(Axis(0)).map(|r| sub.residual(r)).sum::<f64>() / n as f64;
    let mean_max_logit = logits
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / n as f64;
    // Residuals vanish when the data spans no more than the subspace; keep α = 1 then.
    if mean_residual > 1e-12 && mean_max_logit.abs() > 0.0 {
        sub.alpha = mean_max_logit.abs() / mean_residual;
    }
    Ok(sub)
}
