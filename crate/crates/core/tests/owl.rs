use owlkit::cil::Strategy;
use owlkit::metrics::avg_accuracy;
use owlkit::ood::{Method, ScorerConfig};
use owlkit::owl::{evaluate, run_base, run_open_session, OwlConfig};
use owlkit::synth::{generate, Scenario, ScenarioSpec, SessionSpec};
use owlkit::OwlError;

fn config(method: Method, strategy: Strategy) -> OwlConfig {
    let mut cfg = OwlConfig {
        scorer: ScorerConfig::new(method),
        ..OwlConfig::default()
    };
    cfg.cil.strategy = strategy;
    cfg.cil.epochs = 10;
    cfg
}

fn scenario(sessions: Vec<SessionSpec>) -> Scenario {
    generate(&ScenarioSpec {
        sessions,
        ..ScenarioSpec::default()
    })
    .unwrap()
}

#[test]
fn base_session_shape_and_calibration() {
    let sc = scenario(vec![]);
    let cfg = OwlConfig::default();
    let state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    assert_eq!(state.registry.len(), 5);
    assert!(state.registry.entries.iter().all(|e| !e.discovered && e.origin_session == 0));
    let tau = state.scorer.threshold.unwrap();
    let val = state.scorer.score_batch(&state.classifier, sc.base_val.features_f64().view()).unwrap();
    let tpr = val.iter().filter(|&&s| s >= tau).count() as f64 / val.len() as f64;
    assert!(tpr >= 0.95);
    assert_eq!(state.session_logs.len(), 1);
    assert!(state.session_logs[0].session_acc >= 0.95);
}

#[test]
fn all_known_session_discovers_nothing() {
    let sc = scenario(vec![SessionSpec {
        novel_classes: 0,
        known_fraction: 1.0,
        samples_per_class: 30,
    }]);
    let cfg = config(Method::Energy, Strategy::Finetune);
    let state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    // a threshold below every score marks the whole batch as known
    let mut relaxed = state.clone();
    relaxed.scorer.threshold = Some(f64::NEG_INFINITY);
    let (next, outcome) = run_open_session(&relaxed, &sc.sessions[0].train, &sc.sessions[0].test, &cfg).unwrap();
    assert_eq!(outcome.discovered_k, 0);
    assert_eq!(outcome.n_flagged_ood, 0);
    assert_eq!(next.classifier, relaxed.classifier);
    assert_eq!(next.registry, relaxed.registry);
    assert_eq!(next.session_logs.len(), 2);
}

#[test]
fn consecutive_sessions_never_reuse_ids() {
    let sc = scenario(vec![
        SessionSpec {
            novel_classes: 2,
            known_fraction: 0.5,
            samples_per_class: 60,
        },
        SessionSpec {
            novel_classes: 2,
            known_fraction: 0.5,
            samples_per_class: 60,
        },
    ]);
    for strategy in [Strategy::Ncm, Strategy::Finetune, Strategy::Lwf, Strategy::Ewc, Strategy::Icarl] {
        let cfg = config(Method::Energy, strategy);
        let mut state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
        let mut seen = Vec::new();
        for s in &sc.sessions {
            let before = state.registry.clone();
            let (next, outcome) = run_open_session(&state, &s.train, &s.test, &cfg).unwrap();
            assert_eq!(outcome.n_input, s.train.len());
            assert!(outcome.n_flagged_ood <= outcome.n_input);
            assert_eq!(outcome.discovered_k, outcome.new_class_ids.len());
            assert_eq!(next.registry.len(), before.len() + outcome.discovered_k);
            // earlier entries are untouched
            assert_eq!(&next.registry.entries[..before.len()], &before.entries[..]);
            for &id in &outcome.new_class_ids {
                assert!(seen.iter().all(|&s| s < id));
                seen.push(id);
            }
            state = next;
        }
        let accs: Vec<f64> = state.session_logs.iter().map(|l| l.session_acc).collect();
        let last = state.session_logs.last().unwrap();
        assert!((avg_accuracy(&accs).unwrap() - last.avg_acc).abs() <= 1e-12);
        for (i, log) in state.session_logs.iter().enumerate() {
            assert_eq!(log.session_index, i);
        }
        assert!(last.session_acc >= 0.9, "{strategy:?}: {}", last.session_acc);
    }
}

#[test]
fn runs_are_bit_deterministic() {
    let sc = scenario(vec![SessionSpec {
        novel_classes: 3,
        known_fraction: 0.5,
        samples_per_class: 50,
    }]);
    let run = || {
        let cfg = config(Method::Knn, Strategy::Lwf);
        let base = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
        let (state, _) = run_open_session(&base, &sc.sessions[0].train, &sc.sessions[0].test, &cfg).unwrap();
        serde_json::to_string(&state.session_logs).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn unlabeled_input_still_evaluates() {
    let sc = scenario(vec![SessionSpec {
        novel_classes: 3,
        known_fraction: 0.5,
        samples_per_class: 50,
    }]);
    let cfg = config(Method::Energy, Strategy::Ncm);
    let base = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    let input = sc.sessions[0].train.unlabeled();
    let (state, outcome) = run_open_session(&base, &input, &sc.sessions[0].test, &cfg).unwrap();
    assert_eq!(outcome.log.unknown_recall, None);
    assert_eq!(outcome.log.cluster_acc, None);
    // discovered classes are matched to test labels through their predictions
    assert!(outcome.new_class_ids.iter().all(|&id| state.registry.entries[id].label_alias.is_some()));
    assert!(outcome.log.session_acc >= 0.95);
}

#[test]
fn open_session_requires_base() {
    let sc = scenario(vec![SessionSpec {
        novel_classes: 1,
        known_fraction: 0.5,
        samples_per_class: 10,
    }]);
    let cfg = OwlConfig::default();
    let mut state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    state.session_logs.clear();
    assert!(matches!(
        run_open_session(&state, &sc.sessions[0].train, &sc.sessions[0].test, &cfg),
        Err(OwlError::State(_))
    ));
}

#[test]
fn evaluate_appends_a_log() {
    let sc = scenario(vec![]);
    let cfg = OwlConfig::default();
    let mut state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    let log = evaluate(&mut state, &sc.base_train, &cfg).unwrap();
    assert_eq!(log.session_index, 1);
    assert_eq!(state.session_logs.len(), 2);
    assert!((log.avg_acc - (state.session_logs[0].session_acc + log.session_acc) / 2.0).abs() <= 1e-12);
}

#[test]
fn fixed_k_and_full_refit() {
    let sc = scenario(vec![SessionSpec {
        novel_classes: 3,
        known_fraction: 0.5,
        samples_per_class: 50,
    }]);
    let mut cfg = config(Method::Mds, Strategy::Icarl);
    cfg.ncd_k = Some(3);
    cfg.full_refit = true;
    let base = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    let (state, outcome) = run_open_session(&base, &sc.sessions[0].train, &sc.sessions[0].test, &cfg).unwrap();
    assert_eq!(outcome.discovered_k, 3);
    assert_eq!(state.scorer.class_count(), 8);
    assert!(state.replay.as_ref().unwrap().classes().count() == 8);

    let mut no_replay = config(Method::Mds, Strategy::Finetune);
    no_replay.full_refit = true;
    let base = run_base(&sc.base_train, Some(&sc.base_val), &no_replay).unwrap();
    assert!(matches!(
        run_open_session(&base, &sc.sessions[0].train, &sc.sessions[0].test, &no_replay),
        Err(OwlError::Config(_))
    ));
}

#[test]
fn invalid_target_tpr_is_config_error() {
    let sc = scenario(vec![]);
    let cfg = OwlConfig {
        target_tpr: 1.0,
        ..OwlConfig::default()
    };
    assert!(matches!(run_base(&sc.base_train, None, &cfg), Err(OwlError::Config(_))));
}
