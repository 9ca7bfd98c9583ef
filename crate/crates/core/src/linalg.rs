//! Small dense helpers over `ndarray`, with `nalgebra` behind the
//! factorizations.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::{OwlError, Result};

pub fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: ArrayView1<f64>) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns `v / ‖v‖`, or `v` unchanged when its norm is zero.
pub fn normalized(v: ArrayView1<f64>) -> Array1<f64> {
    let n = norm(v);
    if n > 0.0 {
        v.mapv(|x| x / n)
    } else {
        v.to_owned()
    }
}

pub fn normalize_rows(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = norm(row.view());
        if n > 0.0 {
            row.mapv_inplace(|x| x / n);
        }
    }
    out
}

/// Column means of the selected rows.
pub fn mean_of_rows(m: ArrayView2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(m.ncols());
    for &r in rows {
        acc += &m.row(r);
    }
    if !rows.is_empty() {
        acc /= rows.len() as f64;
    }
    acc
}

pub fn to_nalgebra(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::Cholesky::new(to_nalgebra(m))
        .ok_or_else(|| OwlError::Numeric("matrix is not positive definite".into()))?;
    Ok(from_nalgebra(&chol.l()))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::Cholesky::new(to_nalgebra(m))
        .ok_or_else(|| OwlError::Numeric("matrix is not positive definite".into()))?;
    let inv = from_nalgebra(&chol.inverse());
    Ok((&inv + &inv.t()) / 2.0)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
/// Eigenvectors are the columns of the returned matrix.
pub fn symmetric_eigen_desc(m: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn logsumexp(v: ArrayView1<f64>) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: ArrayView1<f64>) -> Array1<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = v.mapv(|x| (x - m).exp());
    let s = e.sum();
    e / s
}

/// Index of the maximum, ties toward the smallest index.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
