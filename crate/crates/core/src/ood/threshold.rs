use crate::{OwlError, Result};

/// Largest `τ` such that at least `target_tpr` of `scores` satisfy `s ≥ τ`.
pub fn threshold_for_tpr(scores: &[f64], target_tpr: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(OwlError::State("no validation scores to calibrate on".into()));
    }
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(OwlError::Argument(format!("target TPR must lie in (0, 1], got {target_tpr}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // smallest count k with k / n ≥ target
    let k = (1..=n)
        .find(|&k| k as f64 / n as f64 >= target_tpr)
        .unwrap_or(n);
    Ok(sorted[k - 1])
}

/// Splits sample indices into those scoring at or above `tau` (ID) and the rest.
pub fn split_by_threshold(scores: &[f64], tau: f64) -> (Vec<usize>, Vec<usize>) {
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for (i, &s) in scores.iter().enumerate() {
        if s >= tau {
            id.push(i);
        } else {
            ood.push(i);
        }
    }
    (id, ood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan_oracle(scores: &[f64], target: f64) -> f64 {
        // every candidate threshold is one of the scores; keep the largest that qualifies
        let n = scores.len() as f64;
        scores
            .iter()
            .copied()
            .filter(|&t| scores.iter().filter(|&&s| s >= t).count() as f64 / n >= target)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn one_to_hundred() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(threshold_for_tpr(&s, 0.95).unwrap(), 6.0);
        assert_eq!(scan_oracle(&s, 0.95), 6.0);
    }

    #[test]
    fn constant_scores() {
        assert_eq!(threshold_for_tpr(&[2.5; 7], 0.3).unwrap(), 2.5);
    }

    #[test]
    fn full_tpr_gives_min() {
        assert_eq!(threshold_for_tpr(&[3.0, -1.0, 2.0], 1.0).unwrap(), -1.0);
    }

    #[test]
    fn empty_is_state_error() {
        assert!(matches!(threshold_for_tpr(&[], 0.9), Err(OwlError::State(_))));
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_by_threshold(&[0.9, 0.1], 0.5), (vec![0], vec![1]));
        assert_eq!(split_by_threshold(&[0.9, 0.5], 0.5), (vec![0, 1], vec![]));
    }

    proptest! {
        #[test]
        fn matches_exhaustive_scan(
            scores in prop::collection::vec(-5i32..5, 1..60),
            target in 0.01f64..1.0,
        ) {
            let s: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let tau = threshold_for_tpr(&s, target).unwrap();
            prop_assert_eq!(tau, scan_oracle(&s, target));
            let kept = s.iter().filter(|&&v| v >= tau).count() as f64 / s.len() as f64;
            prop_assert!(kept >= target);
        }

        #[test]
        fn split_matches_filter(scores in prop::collection::vec(-1.0f64..1.0, 0..80), tau in -1.0f64..1.0) {
            let (id, ood) = split_by_threshold(&scores, tau);
            let id_oracle: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= tau).collect();
            let ood_oracle: Vec<usize> = (0..scores.len()).filter(|&i| !(scores[i] >= tau)).collect();
            prop_assert_eq!(id, id_oracle);
            prop_assert_eq!(ood, ood_oracle);
        }
    }
}
