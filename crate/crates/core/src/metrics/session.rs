use ndarray::ArrayView2;

use crate::{OwlError, Result};

/// Arithmetic mean of per-session accuracies.
pub fn avg_accuracy(session_accs: &[f64]) -> Result<f64> {
    if session_accs.is_empty() {
        return Err(OwlError::Argument("no session accuracies".into()));
    }
    Ok(session_accs.iter().sum::<f64>() / session_accs.len() as f64)
}

/// Average forgetting over a lower-triangular `T×T` matrix where entry
/// `(i, j)` is the accuracy on task `j` after learning task `i`.
///
/// For every task but the last: best accuracy on it before the final
/// session minus its final accuracy; the result is the mean of those gaps.
pub fn forgetting(acc_matrix: ArrayView2<f64>) -> Result<f64> {
    let t = acc_matrix.nrows();
    if t == 0 || acc_matrix.ncols() != t {
        return Err(OwlError::Argument("accuracy matrix must be square and non-empty".into()));
    }
    if t == 1 {
        return Ok(0.0);
    }
    let last = t - 1;
    let total: f64 = (0..last)
        .map(|j| {
            let best = (j..last).map(|i| acc_matrix[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            best - acc_matrix[(last, j)]
        })
        .sum();
    Ok(total / last as f64)
}

/// Rounds half away from zero to `decimals` places; used only when
/// formatting reports.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    // nudge values that sit a hair below .5 because of binary representation
    let r = (scaled + scaled.signum() * 1e-9).round();
    r / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn reported_averages() {
        assert!((avg_accuracy(&[91.27, 50.29]).unwrap() - 70.78).abs() <= 0.005);
        assert!((avg_accuracy(&[91.27, 28.89]).unwrap() - 60.08).abs() <= 0.005);
        assert_eq!(round_half_up(avg_accuracy(&[91.27, 42.11]).unwrap(), 2), 66.69);
    }

    #[test]
    fn empty_is_error() {
        assert!(avg_accuracy(&[]).is_err());
    }

    #[test]
    fn constant_vector() {
        assert_eq!(avg_accuracy(&[0.5; 4]).unwrap(), 0.5);
    }

    #[test]
    fn constant_matrix_no_forgetting() {
        assert_eq!(forgetting(Array2::from_elem((4, 4), 0.8).view()).unwrap(), 0.0);
    }

    #[test]
    fn declining_accuracy() {
        let m = array![[0.9, 0.0, 0.0], [0.7, 0.8, 0.0], [0.5, 0.6, 0.9]];
        // task 0: 0.9 - 0.5, task 1: 0.8 - 0.6
        assert!((forgetting(m.view()).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(70.785, 2), 70.79);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(66.69, 2), 66.69);
    }
}
