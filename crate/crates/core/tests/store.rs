use ndarray::Array2;
use owlkit::cil::Strategy;
use owlkit::ood::{Method, ScorerConfig};
use owlkit::owl::{run_base, run_open_session, OwlConfig};
use owlkit::rng::CounterRng;
use owlkit::store::{
    load_embeddings, load_state, npy, save_embeddings, save_state, EmbeddingSet, Manifest, Role, STATE_VERSION,
};
use owlkit::synth::{generate, ScenarioSpec, SessionSpec};
use owlkit::OwlError;
use proptest::prelude::*;

fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f32> {
    let mut r = CounterRng::new(seed);
    Array2::from_shape_fn((n, d), |_| (r.next_normal() * 10.0) as f32)
}

#[test]
fn random_matrix_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_matrix(100, 16, 1);
    let path = dir.path().join("f.npy");
    save_embeddings(&EmbeddingSet::new(m.clone(), None).unwrap(), &path, None).unwrap();

    // independent reader
    let bytes = std::fs::read(&path).unwrap();
    let reference: Vec<f32> = npyz::NpyFile::new(&bytes[..]).unwrap().into_vec().unwrap();
    assert!(reference.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let back = load_embeddings(&path, None).unwrap();
    assert!(back.labels().is_none());
    assert!(back.features().iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn large_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_matrix(1000, 64, 2);
    let labels: Vec<i64> = (0..1000).map(|i| i % 7).collect();
    let set = EmbeddingSet::new(m, Some(labels)).unwrap();
    let (f, l) = (dir.path().join("f.npy"), dir.path().join("l.npy"));
    save_embeddings(&set, &f, Some(&l)).unwrap();
    let back = load_embeddings(&f, Some(&l)).unwrap();
    assert_eq!(back, set);
    let (f2, l2) = (dir.path().join("f2.npy"), dir.path().join("l2.npy"));
    save_embeddings(&back, &f2, Some(&l2)).unwrap();
    assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(&f2).unwrap());
    assert_eq!(std::fs::read(&l).unwrap(), std::fs::read(&l2).unwrap());
}

#[test]
fn one_by_one_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet::new(Array2::from_elem((1, 1), 7.5f32), None).unwrap();
    let f = dir.path().join("one.npy");
    save_embeddings(&set, &f, None).unwrap();
    assert_eq!(load_embeddings(&f, None).unwrap().features()[(0, 0)], 7.5);

    let set = EmbeddingSet::new(random_matrix(3, 2, 3), Some(vec![0, 1, 2])).unwrap();
    let l = dir.path().join("labels.npy");
    save_embeddings(&set, &f, Some(&l)).unwrap();
    assert_eq!(load_embeddings(&f, Some(&l)).unwrap().labels(), Some(&[0i64, 1, 2][..]));
}

#[test]
fn label_length_mismatch_is_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.npy");
    let l = dir.path().join("l.npy");
    npy::write_f32_matrix(&f, &random_matrix(5, 3, 4)).unwrap();
    npy::write_i64_vector(&l, &[0, 1, 2, 3]).unwrap();
    assert!(matches!(load_embeddings(&f, Some(&l)), Err(OwlError::Consistency(_))));
}

#[test]
fn unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet::new(random_matrix(2, 2, 5), None).unwrap();
    let bad = dir.path().join("missing").join("f.npy");
    assert!(matches!(save_embeddings(&set, &bad, None), Err(OwlError::Io { .. })));
}

proptest! {
    #[test]
    fn truncated_or_padded_payloads_are_rejected(n in 1usize..20, d in 1usize..6, cut in 1usize..8, pad in 1usize..8) {
        let m = random_matrix(n, d, (n * 31 + d) as u64);
        let mut bytes = Vec::new();
        npy::write_to(&mut bytes, &npy::NpyArray {
            shape: vec![n, d],
            data: npy::NpyData::F32(m.iter().copied().collect()),
        }).unwrap();
        prop_assert!(npy::parse(&bytes).is_ok());
        let short = &bytes[..bytes.len() - cut.min(4 * n * d)];
        prop_assert!(matches!(npy::parse(short), Err(OwlError::Format(_))));
        let mut long = bytes.clone();
        long.extend(std::iter::repeat_n(0u8, pad));
        prop_assert!(matches!(npy::parse(&long), Err(OwlError::Format(_))));
    }
}

#[test]
fn manifest_written_by_synth_loads() {
    let dir = tempfile::tempdir().unwrap();
    let sc = generate(&ScenarioSpec::default()).unwrap();
    let path = sc.write(dir.path()).unwrap();
    let m = Manifest::load(&path).unwrap();
    assert_eq!(m.open_sessions(), vec![1]);
    let train = m.load_set(0, Role::BaseTrain).unwrap();
    assert_eq!(train, sc.base_train);
    let session = m.load_set(1, Role::SessionTrain).unwrap();
    assert_eq!(session.labels(), sc.sessions[0].train.labels());
    assert!(!m.entry(1, Role::SessionTrain).unwrap().labeled);
}

fn two_session_state(strategy: Strategy, method: Method) -> owlkit::store::PipelineState {
    let spec = ScenarioSpec {
        sessions: vec![
            SessionSpec {
                novel_classes: 2,
                known_fraction: 0.5,
                samples_per_class: 50,
            },
            SessionSpec {
                novel_classes: 1,
                known_fraction: 0.5,
                samples_per_class: 50,
            },
        ],
        ..ScenarioSpec::default()
    };
    let sc = generate(&spec).unwrap();
    let mut cfg = OwlConfig {
        scorer: ScorerConfig::new(method),
        ..OwlConfig::default()
    };
    cfg.cil.strategy = strategy;
    cfg.cil.epochs = 5;
    let mut state = run_base(&sc.base_train, Some(&sc.base_val), &cfg).unwrap();
    for s in &sc.sessions {
        state = run_open_session(&state, &s.train, &s.test, &cfg).unwrap().0;
    }
    state
}

#[test]
fn fresh_base_state_round_trip() {
    let sc = generate(&ScenarioSpec::default()).unwrap();
    let state = run_base(&sc.base_train, Some(&sc.base_val), &OwlConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_state(&state, dir.path()).unwrap();
    let back = load_state(dir.path()).unwrap();
    assert_eq!(back.registry.len(), 5);
    assert_eq!(back, state);
}

#[test]
fn state_after_two_sessions_round_trips_field_by_field() {
    for (strategy, method) in [(Strategy::Icarl, Method::Knn), (Strategy::Ewc, Method::Vim), (Strategy::Ncm, Method::Mds)] {
        let state = two_session_state(strategy, method);
        assert_eq!(state.session_logs.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        save_state(&state, dir.path()).unwrap();
        let back = load_state(dir.path()).unwrap();
        assert_eq!(back.session_logs, state.session_logs);
        assert_eq!(back.registry, state.registry);
        assert_eq!(back.classifier, state.classifier);
        assert_eq!(back.scorer, state.scorer);
        assert_eq!(back.replay, state.replay);
        assert_eq!(back.ewc, state.ewc);
        assert_eq!(back.rng_seed, state.rng_seed);

        // saving the loaded state reproduces every file byte for byte
        let again = tempfile::tempdir().unwrap();
        save_state(&back, again.path()).unwrap();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(dir.path().join(&name)).unwrap(),
                std::fs::read(again.path().join(&name)).unwrap(),
                "{name:?}"
            );
        }
    }
}

#[test]
fn version_mismatch_is_rejected() {
    let sc = generate(&ScenarioSpec::default()).unwrap();
    let state = run_base(&sc.base_train, Some(&sc.base_val), &OwlConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_state(&state, dir.path()).unwrap();
    let header = dir.path().join("state.json");
    let text = std::fs::read_to_string(&header).unwrap();
    std::fs::write(&header, text.replace(STATE_VERSION, "owl-state-v0")).unwrap();
    assert!(matches!(load_state(dir.path()), Err(OwlError::Version(_))));
}
