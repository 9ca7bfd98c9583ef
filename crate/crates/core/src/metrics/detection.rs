use serde::{Deserialize, Serialize};

use crate::ood::threshold_for_tpr;
use crate::{OwlError, Result};

fn check_sides(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(OwlError::Argument("both ID and OOD scores must be non-empty".into()));
    }
    if id.iter().chain(ood).any(|s| s.is_nan()) {
        return Err(OwlError::Argument("scores contain NaN".into()));
    }
    Ok(())
}

/// Probability that a random ID score exceeds a random OOD score, ties
/// counting one half. Mann-Whitney U with midranks, `O(n log n)`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_sides(id_scores, ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_id = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks are 1-based; a tie block i..=j shares the average rank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let ids_in_block = all[i..=j].iter().filter(|(_, is_id)| *is_id).count();
        rank_sum_id += midrank * ids_in_block as f64;
        i = j + 1;
    }
    let n_id = id_scores.len() as f64;
    let n_ood = ood_scores.len() as f64;
    let u = rank_sum_id - n_id * (n_id + 1.0) / 2.0;
    Ok(u / (n_id * n_ood))
}

/// False-positive rate at the operating point where the ID true-positive
/// rate first reaches `tpr`, scanning thresholds downward. Scores equal to
/// the threshold count as ID.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr: f64) -> Result<f64> {
    check_sides(id_scores, ood_scores)?;
    if !(tpr > 0.0 && tpr < 1.0) {
        return Err(OwlError::Argument(format!("TPR must lie in (0, 1), got {tpr}")));
    }
    let tau = threshold_for_tpr(id_scores, tpr)?;
    let fp = ood_scores.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / ood_scores.len() as f64)
}

/// Average precision with ID samples as the positive class.
pub fn aupr_in(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_sides(id_scores, ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_id = id_scores.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        for &(_, is_id) in &all[i..=j] {
            if is_id {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_id;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub auroc: f64,
    pub aupr_in: f64,
    pub fpr_at_tpr: f64,
    pub tpr_target: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl DetectionReport {
    pub fn compute(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<Self> {
        Ok(DetectionReport {
            auroc: auroc(id_scores, ood_scores)?,
            aupr_in: aupr_in(id_scores, ood_scores)?,
            fpr_at_tpr: fpr_at_tpr(id_scores, ood_scores, tpr_target)?,
            tpr_target,
            n_id: id_scores.len(),
            n_ood: ood_scores.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn pairwise(id: &[f64], ood: &[f64]) -> f64 {
        let mut s = 0.0;
        for &a in id {
            for &b in ood {
                s += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (id.len() * ood.len()) as f64
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc(&[1.0; 5], &[0.0; 3]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 4], &[0.3; 6]).unwrap(), 0.5);
    }

    #[test]
    fn empty_side_rejected() {
        assert!(matches!(auroc(&[], &[1.0]), Err(OwlError::Argument(_))));
        assert!(matches!(fpr_at_tpr(&[1.0], &[], 0.95), Err(OwlError::Argument(_))));
    }

    #[test]
    fn random_matches_pairwise() {
        let mut r = CounterRng::new(77);
        for _ in 0..20 {
            let id: Vec<f64> = (0..100).map(|_| (r.next_below(30) as f64) / 3.0).collect();
            let ood: Vec<f64> = (0..100).map(|_| (r.next_below(30) as f64) / 3.0 - 1.0).collect();
            assert!((auroc(&id, &ood).unwrap() - pairwise(&id, &ood)).abs() <= 1e-9);
        }
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_at_tpr(&[5.0, 6.0], &[1.0, 2.0], 0.95).unwrap(), 0.0);
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fpr_at_tpr(&s, &s, 0.95).unwrap(), 0.95);
    }

    #[test]
    fn aupr_perfect() {
        assert_eq!(aupr_in(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn complementary(id in prop::collection::vec(-3i32..3, 1..40), ood in prop::collection::vec(-3i32..3, 1..40)) {
            let id: Vec<f64> = id.into_iter().map(f64::from).collect();
            let ood: Vec<f64> = ood.into_iter().map(f64::from).collect();
            let s = auroc(&id, &ood).unwrap() + auroc(&ood, &id).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariant(id in prop::collection::vec(-2.0f64..2.0, 1..30), ood in prop::collection::vec(-2.0f64..2.0, 1..30)) {
            let f = |v: &Vec<f64>| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
            prop_assert!((auroc(&id, &ood).unwrap() - auroc(&f(&id), &f(&ood)).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn same_multiset_fpr_at_least_tpr(v in prop::collection::vec(-5i32..5, 1..50), t in 0.05f64..0.95) {
            let s: Vec<f64> = v.into_iter().map(f64::from).collect();
            let fpr = fpr_at_tpr(&s, &s, t).unwrap();
            prop_assert!(fpr >= t);
            // exhaustive scan over candidate thresholds
            let n = s.len() as f64;
            let tau = s.iter().copied().filter(|&c| s.iter().filter(|&&x| x >= c).count() as f64 / n >= t).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(fpr, s.iter().filter(|&&x| x >= tau).count() as f64 / n);
        }
    }
}
