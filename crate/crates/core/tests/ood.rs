use ndarray::{Array1, Array2};
use owlkit::cil::{init_base, HeadKind, IncrementalClassifier, TrainConfig};
use owlkit::ood::{precision_factor, shrunk_covariance, split_by_threshold, threshold_for_tpr, FittedScorer, Method, ScorerConfig};
use owlkit::rng::CounterRng;
use owlkit::store::EmbeddingSet;
use owlkit::synth::{generate, ScenarioSpec};
use owlkit::{Exec, OwlError};
use proptest::prelude::*;


fn gaussian_classes(c: usize, d: usize, n: usize, seed: u64) -> EmbeddingSet {
    let mut r = CounterRng::new(seed);
    let centers = Array2::from_shape_fn((c, d), |_| r.next_normal() * 6.0);
    let mut rows = Vec::with_capacity(c * n * d);
    let mut labels = Vec::with_capacity(c * n);
    for k in 0..c {
        for _ in 0..n {
            rows.extend((0..d).map(|j| (centers[(k, j)] + r.next_normal()) as f32));
            labels.push(k as i64);
        }
    }
    EmbeddingSet::new(Array2::from_shape_vec((c * n, d), rows).unwrap(), Some(labels)).unwrap()
}

fn identity_head(c: usize) -> IncrementalClassifier {
    IncrementalClassifier::from_prototypes(Array2::eye(c), HeadKind::Linear, 16.0).unwrap()
}

fn msp_oracle(z: &[f64]) -> f64 {
    // sort exponent terms ascending so small terms are summed first
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut terms: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    terms.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut carry = 0.0;
    for t in terms {
        let y = t - carry;
        let s = sum + y;
        carry = (s - sum) - y;
        sum = s;
    }
    1.0 / sum
}

#[test]
fn msp_matches_compensated_oracle() {
    let mut cfg = ScorerConfig::new(Method::Msp);
    cfg.temperature = None;
    let set = gaussian_classes(10, 10, 3, 1);
    let scorer = FittedScorer::fit(&cfg, &set, &identity_head(10)).unwrap();
    let mut r = CounterRng::new(2);
    let feature = Array1::<f64>::zeros(10);
    for _ in 0..1000 {
        let z: Vec<f64> = (0..10).map(|_| r.next_normal() * 10.0).collect();
        let got = scorer.score(feature.view(), Array1::from(z.clone()).view()).unwrap();
        let want = msp_oracle(&z);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn mds_precision_factor_inverts_covariance() {
    let set = gaussian_classes(3, 8, 200, 3);
    let x = set.features_f64();
    let labels = set.labels().unwrap();
    let mut means = Array2::<f64>::zeros((3, 8));
    let mut counts = [0.0; 3];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = means.row_mut(l as usize);
        row += &x.row(i);
        counts[l as usize] += 1.0;
    }
    for (mut row, n) in means.axis_iter_mut(ndarray::Axis(0)).zip(counts) {
        row /= n;
    }
    let centered = Array2::from_shape_fn(x.raw_dim(), |(i, j)| x[(i, j)] - means[(labels[i] as usize, j)]);
    let l = precision_factor(centered.view(), 1e-6).unwrap();
    let sigma = shrunk_covariance(centered.view(), 1e-6);
    let prod = l.dot(&l.t()).dot(&sigma);
    let err = (&prod - &Array2::<f64>::eye(8)).iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-8, "{err}");
    for i in 0..8 {
        for j in i + 1..8 {
            assert_eq!(l[(i, j)], 0.0);
        }
    }
}

#[test]
fn batch_scores_agree_across_exec_modes() {
    let sc = generate(&ScenarioSpec::default()).unwrap();
    let clf = init_base(
        &sc.base_train,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let x = sc.sessions[0].train.features_f64();
    for method in Method::ALL {
        let scorer = FittedScorer::fit(&ScorerConfig::new(method), &sc.base_train, &clf).unwrap();
        let a = scorer.score_batch_with(Exec::Sequential, &clf, x.view()).unwrap();
        let b = scorer.score_batch_with(Exec::Parallel, &clf, x.view()).unwrap();
        assert_eq!(a, b, "{method:?}");
        assert!(a.iter().all(|s| s.is_finite()));
    }
}

#[test]
fn every_method_separates_far_novel_classes() {
    let sc = generate(&ScenarioSpec::default()).unwrap();
    let clf = init_base(&sc.base_train, &TrainConfig::default()).unwrap();
    let session = &sc.sessions[0].train;
    let labels = session.labels().unwrap();
    let x = session.features_f64();
    for method in Method::ALL {
        let scorer = FittedScorer::fit(&ScorerConfig::new(method), &sc.base_train, &clf)
            .unwrap()
            .calibrated(0.95)
            .unwrap();
        let scores = scorer.score_batch(&clf, x.view()).unwrap();
        let tau = scorer.threshold.unwrap();
        let novel: Vec<f64> = labels.iter().zip(&scores).filter(|(&l, _)| l >= 5).map(|(_, &s)| s).collect();
        let caught = novel.iter().filter(|&&s| s < tau).count() as f64 / novel.len() as f64;
        assert!(caught >= 0.8, "{method:?}: {caught}");
    }
}

#[test]
fn mds_needs_two_samples_per_class() {
    let set = EmbeddingSet::new(
        ndarray::array![[0.0f32, 0.0], [1.0, 0.0], [5.0, 5.0]],
        Some(vec![0, 0, 1]),
    )
    .unwrap();
    let err = FittedScorer::fit(&ScorerConfig::new(Method::Mds), &set, &identity_head(2));
    assert!(matches!(err, Err(OwlError::Data(_))));
}

#[test]
fn scoring_rejects_wrong_widths() {
    let set = gaussian_classes(2, 2, 5, 4);
    let scorer = FittedScorer::fit(&ScorerConfig::new(Method::Energy), &set, &identity_head(2)).unwrap();
    let bad = Array2::<f64>::zeros((3, 5));
    assert!(matches!(scorer.score_batch(&identity_head(2), bad.view()), Err(OwlError::Shape(_))));
    assert!(matches!(
        scorer.score(Array1::zeros(2).view(), Array1::zeros(3).view()),
        Err(OwlError::Shape(_))
    ));
}

proptest! {
    #[test]
    fn energy_and_mls_shift_with_the_logits(z in prop::collection::vec(-30.0f64..30.0, 4), c in -50.0f64..50.0) {
        let set = gaussian_classes(4, 4, 3, 5);
        let f = Array1::<f64>::zeros(4);
        let za = Array1::from(z.clone());
        let zb = za.mapv(|v| v + c);
        for method in [Method::Energy, Method::Mls] {
            let s = FittedScorer::fit(&ScorerConfig::new(method), &set, &identity_head(4)).unwrap();
            let d = s.score(f.view(), zb.view()).unwrap() - s.score(f.view(), za.view()).unwrap();
            prop_assert!((d - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
        for method in [Method::Msp, Method::Tsoftmax] {
            let s = FittedScorer::fit(&ScorerConfig::new(method), &set, &identity_head(4)).unwrap();
            let a = s.score(f.view(), za.view()).unwrap();
            let b = s.score(f.view(), zb.view()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.25 - 1e-15..=1.0).contains(&a));
        }
    }

    #[test]
    fn threshold_keeps_target_fraction(scores in prop::collection::vec(-100.0f64..100.0, 1..300), q in 0.05f64..0.99) {
        let tau = threshold_for_tpr(&scores, q).unwrap();
        let (id, ood) = split_by_threshold(&scores, tau);
        prop_assert_eq!(id.len() + ood.len(), scores.len());
        prop_assert!(id.len() as f64 >= q * scores.len() as f64 - 1e-9);
        // the threshold is one of the scores and nothing larger would work
        prop_assert!(scores.contains(&tau));
        let stricter = scores.iter().filter(|&&s| s > tau).count();
        prop_assert!((stricter as f64) < q * scores.len() as f64);
        prop_assert!(id.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ood.windows(2).all(|w| w[0] < w[1]));
    }
}
