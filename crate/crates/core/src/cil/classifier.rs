use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::{argmax, dot, normalize_rows, normalized, sq_dist};
use crate::{Exec, OwlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    Linear,
    Cosine,
}

/// The classifier head over frozen embeddings plus per-class prototypes.
///
/// Linear heads compute `W x + b`. Cosine heads keep every weight row at
/// unit norm and compute `s · W x / ‖x‖`; their bias stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalClassifier {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
    pub(crate) prototypes: Array2<f64>,
    pub(crate) head_kind: HeadKind,
    pub(crate) cosine_scale: f64,
}

impl IncrementalClassifier {
    pub fn new(
        weights: Array2<f64>,
        bias: Array1<f64>,
        prototypes: Array2<f64>,
        head_kind: HeadKind,
        cosine_scale: f64,
    ) -> Result<Self> {
        let c = weights.nrows();
        if bias.len() != c || prototypes.nrows() != c {
            return Err(OwlError::Shape(format!(
                "weights have {c} rows, bias {} entries, prototypes {} rows",
                bias.len(),
                prototypes.nrows()
            )));
        }
        if prototypes.ncols() != weights.ncols() {
            return Err(OwlError::Shape("prototype width differs from weight width".into()));
        }
        if !(cosine_scale > 0.0) {
            return Err(OwlError::Argument("cosine scale must be positive".into()));
        }
        let mut clf = IncrementalClassifier {
            weights,
            bias,
            prototypes,
            head_kind,
            cosine_scale,
        };
        clf.renormalize();
        Ok(clf)
    }

    /// A head whose rows are the prototypes themselves (normalized for cosine).
    pub fn from_prototypes(prototypes: Array2<f64>, head_kind: HeadKind, cosine_scale: f64) -> Result<Self> {
        let c = prototypes.nrows();
        Self::new(prototypes.clone(), Array1::zeros(c), prototypes, head_kind, cosine_scale)
    }

    pub fn class_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn cosine_scale(&self) -> f64 {
        self.cosine_scale
    }

    pub(crate) fn renormalize(&mut self) {
        if self.head_kind == HeadKind::Cosine {
            self.weights = normalize_rows(self.weights.view());
            self.bias.fill(0.0);
        }
    }

    pub(crate) fn set_prototype(&mut self, class: usize, proto: ArrayView1<f64>) {
        self.prototypes.row_mut(class).assign(&proto);
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.dim() {
            return Err(OwlError::Shape(format!(
                "input width {width} but classifier width {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Input as seen by the head: raw for linear, unit-normalized for cosine.
    pub(crate) fn head_input(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self.head_kind {
            HeadKind::Linear => x.to_owned(),
            HeadKind::Cosine => normalized(x),
        }
    }

    /// Logits from an already prepared head input.
    pub(crate) fn logits_prepared(&self, input: ArrayView1<f64>) -> Array1<f64> {
        let c = self.class_count();
        match self.head_kind {
            HeadKind::Linear => Array1::from_shape_fn(c, |k| dot(self.weights.row(k), input) + self.bias[k]),
            HeadKind::Cosine => {
                Array1::from_shape_fn(c, |k| self.cosine_scale * dot(self.weights.row(k), input))
            }
        }
    }

    pub fn logits(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_width(x.len())?;
        Ok(self.logits_prepared(self.head_input(x).view()))
    }

    pub fn logits_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.logits_batch_with(Exec::default(), x)
    }

    pub fn logits_batch_with(&self, exec: Exec, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        let rows = exec.map(x.nrows(), |i| self.logits_prepared(self.head_input(x.row(i)).view()));
        Ok(stack_rows(rows, self.class_count()))
    }

    /// Argmax of the head logits; ties go to the smallest class id.
    pub fn head_predict(&self, x: ArrayView2<f64>) -> Result<(Vec<usize>, Array2<f64>)> {
        let logits = self.logits_batch(x)?;
        let labels = logits.axis_iter(Axis(0)).map(argmax).collect();
        Ok((labels, logits))
    }

    /// Nearest prototype after L2-normalizing features and prototypes;
    /// ties go to the smallest class id.
    pub fn ncm_predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        self.ncm_predict_with(Exec::default(), x)
    }

    pub fn ncm_predict_with(&self, exec: Exec, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        self.check_width(x.ncols())?;
        let protos = normalize_rows(self.prototypes.view());
        Ok(exec.map(x.nrows(), |i| {
            let xi = normalized(x.row(i));
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, p) in protos.axis_iter(Axis(0)).enumerate() {
                let d = sq_dist(xi.view(), p);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        }))
    }

    /// Appends `new_class_count` classes whose weight rows start at the
    /// given prototypes. Existing rows are left untouched.
    pub fn extend_head(&self, new_class_count: usize, init_prototypes: ArrayView2<f64>) -> Result<Self> {
        if init_prototypes.nrows() != new_class_count || init_prototypes.ncols() != self.dim() {
            return Err(OwlError::Shape(format!(
                "expected {new_class_count}×{} prototypes, got {}×{}",
                self.dim(),
                init_prototypes.nrows(),
                init_prototypes.ncols()
            )));
        }
        if new_class_count == 0 {
            return Ok(self.clone());
        }
        let new_rows = match self.head_kind {
            HeadKind::Linear => init_prototypes.to_owned(),
            HeadKind::Cosine => normalize_rows(init_prototypes),
        };
        Ok(IncrementalClassifier {
            weights: concatenate(Axis(0), &[self.weights.view(), new_rows.view()]).expect("widths checked"),
            bias: concatenate(Axis(0), &[self.bias.view(), Array1::zeros(new_class_count).view()])
                .expect("1-d"),
            prototypes: concatenate(Axis(0), &[self.prototypes.view(), init_prototypes]).expect("widths checked"),
            head_kind: self.head_kind,
            cosine_scale: self.cosine_scale,
        })
    }

    /// Parameters flattened class by class as `[W_0, b_0, W_1, b_1, ...]`,
    /// so appending classes only appends to the vector.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.class_count() * (self.dim() + 1));
        for c in 0..self.class_count() {
            out.extend(self.weights.row(c).iter());
            out.push(self.bias[c]);
        }
        out
    }

    /// Same classifier with parameters taken from a flat vector laid out as
    /// in [`flat_params`](Self::flat_params). No renormalization is applied.
    pub fn with_flat_params(&self, flat: &[f64]) -> Result<Self> {
        let (c, d) = (self.class_count(), self.dim());
        if flat.len() != c * (d + 1) {
            return Err(OwlError::Shape(format!("expected {} parameters, got {}", c * (d + 1), flat.len())));
        }
        let mut out = self.clone();
        for k in 0..c {
            let block = &flat[k * (d + 1)..(k + 1) * (d + 1)];
            out.weights.row_mut(k).assign(&ArrayView1::from(&block[..d]));
            out.bias[k] = block[d];
        }
        Ok(out)
    }
}

pub(crate) fn stack_rows(rows: Vec<Array1<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * width);
    for r in rows {
        flat.extend(r);
    }
    Array2::from_shape_vec((n, width), flat).expect("rows share width")
}
