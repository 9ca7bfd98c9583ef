use std::path::Path;

use owlkit::cil::{LabeledRun, Strategy};
use owlkit::metrics::{cluster_accuracy, nmi, purity, DetectionReport};
use owlkit::ncd::discover;
use owlkit::ood::{FittedScorer, Method};
use owlkit::owl::{run_base, run_open_session};
use owlkit::rng;
use owlkit::store::{load_embeddings, load_state, save_state, EmbeddingSet, Manifest, Role};
use owlkit::synth::{generate, ScenarioSpec};
use owlkit::{OwlError, Result};
use serde::Serialize;

use crate::config::Config;
use crate::output::{num, opt, write_json, Table};

const CIL_STREAM: u64 = 0x4349_4C52; // "CILR"

fn has_entry(m: &Manifest, session: usize, role: Role) -> bool {
    m.entry(session, role).is_ok()
}

fn base_eval_set(m: &Manifest, train: &EmbeddingSet) -> Result<EmbeddingSet> {
    if has_entry(m, 0, Role::BaseVal) {
        m.load_set(0, Role::BaseVal)
    } else {
        Ok(train.clone())
    }
}

pub fn fit_base(manifest: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = Config::load(config)?.owl(seed);
    cfg.validate()?;
    let m = Manifest::load(manifest)?;
    let train = m.load_set(0, Role::BaseTrain)?;
    let val = has_entry(&m, 0, Role::BaseVal).then(|| m.load_set(0, Role::BaseVal)).transpose()?;
    let state = run_base(&train, val.as_ref(), &cfg)?;
    save_state(&state, out)?;
    let log = &state.session_logs[0];
    log::info!(
        "base: {} classes, threshold {:.6}, accuracy {:.4}",
        state.registry.len(),
        log.threshold,
        log.session_acc
    );
    Ok(())
}

pub fn owl_run(manifest: &Path, config: Option<&Path>, state_dir: &Path, cap: Option<usize>) -> Result<()> {
    let mut cfg = Config::load(config)?.owl(None);
    let m = Manifest::load(manifest)?;
    let mut state = load_state(state_dir)?;
    cfg.seed = state.rng_seed;
    cfg.validate()?;
    let pending: Vec<usize> = m
        .open_sessions()
        .into_iter()
        .filter(|&s| s >= state.next_session())
        .take(cap.unwrap_or(usize::MAX))
        .collect();
    for s in pending {
        if s != state.next_session() {
            return Err(OwlError::Format(format!(
                "manifest skips from session {} to {s}",
                state.next_session()
            )));
        }
        let input = m.load_set(s, Role::SessionTrain)?;
        let test = m.load_set(s, Role::SessionTest)?;
        let (next, outcome) = run_open_session(&state, &input, &test, &cfg)?;
        state = next;
        save_state(&state, state_dir)?;
        log::info!(
            "session {s}: {} inputs, {} flagged, {} new classes, accuracy {:.4}, avg {:.4}",
            outcome.n_input,
            outcome.n_flagged_ood,
            outcome.discovered_k,
            outcome.log.session_acc,
            outcome.log.avg_acc
        );
    }
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn ood_eval(
    id: &Path,
    ood: &[std::path::PathBuf],
    state_dir: &Path,
    method: Method,
    manifest: Option<&Path>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = Config::load(config)?;
    let state = load_state(state_dir)?;
    let scorer = if state.scorer.config.method == method {
        state.scorer.clone()
    } else {
        let manifest = manifest.ok_or_else(|| {
            OwlError::Config(format!(
                "the state holds a {} scorer; pass --manifest to fit {}",
                state.scorer.config.method.name(),
                method.name()
            ))
        })?;
        let m = Manifest::load(manifest)?;
        let train = m.load_set(0, Role::BaseTrain)?;
        let mut sc = cfg.scorer.clone();
        sc.method = method;
        FittedScorer::fit(&sc, &train, &state.classifier)?
    };
    let score = |path: &Path| -> Result<Vec<f64>> {
        let set = load_embeddings(path, None)?;
        scorer.score_batch(&state.classifier, set.features_f64().view())
    };
    let id_scores = score(id)?;
    let mut table = Table::create(out, &["group", "dataset", "auroc", "fpr95"])?;
    let mut results = Vec::new();
    for path in ood {
        let name = dataset_name(path);
        let report = DetectionReport::compute(&id_scores, &score(path)?, cfg.report.tpr)?;
        let group = cfg
            .report
            .groups
            .iter()
            .find(|(_, members)| members.contains(&name))
            .map(|(g, _)| g.clone())
            .unwrap_or_default();
        table.row([group, name.clone(), num(report.auroc), num(report.fpr_at_tpr)])?;
        results.push((name, report));
    }
    for (group, members) in &cfg.report.groups {
        let hits: Vec<&DetectionReport> =
            results.iter().filter(|(n, _)| members.contains(n)).map(|(_, r)| r).collect();
        if hits.is_empty() {
            continue;
        }
        let n = hits.len() as f64;
        let auroc = hits.iter().map(|r| r.auroc).sum::<f64>() / n;
        let fpr = hits.iter().map(|r| r.fpr_at_tpr).sum::<f64>() / n;
        table.row([group.clone(), "average".into(), num(auroc), num(fpr)])?;
    }
    table.finish()
}

fn session_seed(seed: u64, session: usize) -> u64 {
    rng::key(seed, &[CIL_STREAM, session as u64])
}

pub fn cil_run(manifest: &Path, config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let cfg = Config::load(config)?;
    let seed = cfg.seed(seed);
    let mut tc = cfg.cil.clone();
    tc.validate().map_err(|e| OwlError::Config(e.to_string()))?;
    let m = Manifest::load(manifest)?;
    let strategy = tc.strategy;

    let train = m.load_set(0, Role::BaseTrain)?;
    tc.seed = session_seed(seed, 0);
    let mut run = LabeledRun::base(&train, &tc)?;
    let mut table = Table::create(out, &["session", "classes", "accuracy", "avg"])?;
    let mut accs = Vec::new();
    let mut emit = |table: &mut Table, s: usize, run: &LabeledRun, acc: f64| {
        accs.push(acc);
        let avg = accs.iter().sum::<f64>() / accs.len() as f64;
        table.row([s.to_string(), run.classifier.class_count().to_string(), num(acc), num(avg)])
    };
    let acc = run.accuracy(&base_eval_set(&m, &train)?, strategy)?;
    emit(&mut table, 0, &run, acc)?;
    for s in m.open_sessions() {
        tc.seed = session_seed(seed, s);
        run = run.step(&m.load_set(s, Role::SessionTrain)?, &tc)?;
        let acc = run.accuracy(&m.load_set(s, Role::SessionTest)?, strategy)?;
        emit(&mut table, s, &run, acc)?;
    }
    table.finish()
}

/// The first `k` samples of every class at or beyond `first_new`.
fn select_shots(set: &EmbeddingSet, first_new: i64, k: usize) -> Result<(EmbeddingSet, usize)> {
    let labels = set.require_labels()?;
    let mut taken = std::collections::BTreeMap::<i64, Vec<usize>>::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= first_new {
            let rows = taken.entry(l).or_default();
            if rows.len() < k {
                rows.push(i);
            }
        }
    }
    if let Some((l, rows)) = taken.iter().find(|(_, r)| r.len() < k) {
        return Err(OwlError::Data(format!("class {l} has {} samples, fewer than {k} shots", rows.len())));
    }
    let rows: Vec<usize> = taken.values().flatten().copied().collect();
    Ok((set.select(&rows), taken.len()))
}

pub fn fscil_run(
    manifest: &Path,
    config: Option<&Path>,
    shots: usize,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    if shots == 0 {
        return Err(OwlError::Argument("--shots must be at least 1".into()));
    }
    let cfg = Config::load(config)?;
    let mut tc = cfg.cil.clone();
    tc.validate().map_err(|e| OwlError::Config(e.to_string()))?;
    tc.seed = session_seed(cfg.seed(seed), 0);
    let m = Manifest::load(manifest)?;
    let train = m.load_set(0, Role::BaseTrain)?;
    let mut run = LabeledRun::base(&train, &tc)?;
    let mut accs = vec![run.accuracy(&base_eval_set(&m, &train)?, Strategy::FscilProto)?];
    let mut way = 0;
    for s in m.open_sessions() {
        let c = run.classifier.class_count() as i64;
        let (shot_set, n_way) = select_shots(&m.load_set(s, Role::SessionTrain)?, c, shots)?;
        if way == 0 {
            way = n_way;
        }
        run = run.few_shot_step(&shot_set, shots)?;
        accs.push(run.accuracy(&m.load_set(s, Role::SessionTest)?, Strategy::FscilProto)?);
        log::info!("session {s}: {} classes, accuracy {:.4}", run.classifier.class_count(), accs[accs.len() - 1]);
    }
    let last = *accs.last().expect("base accuracy");
    let avg = accs.iter().sum::<f64>() / accs.len() as f64;
    let mut table = Table::create(out, &["dataset", "way", "shot", "sessions", "last", "avg"])?;
    table.row([
        m.dataset.clone(),
        way.to_string(),
        shots.to_string(),
        accs.len().to_string(),
        num(last),
        num(avg),
    ])?;
    table.finish()
}

pub fn ncd_eval(features: &Path, labels: &Path, k: Option<usize>, seed: u64, out: Option<&Path>) -> Result<()> {
    if k == Some(0) {
        return Err(OwlError::Argument("--k must be positive".into()));
    }
    let set = load_embeddings(features, Some(labels))?;
    let truth = set.require_labels()?.to_vec();
    let found = discover(&set.unlabeled(), k, seed)?;
    let pred: Vec<i64> = found.labels.iter().map(|&l| l as i64).collect();
    let mut table = Table::create(out, &["k", "cluster_acc", "nmi", "purity"])?;
    table.row([
        found.k.to_string(),
        num(cluster_accuracy(&pred, &truth)?),
        num(nmi(&pred, &truth)?),
        num(purity(&pred, &truth)?),
    ])?;
    table.finish()
}

#[derive(Serialize)]
struct PlotData {
    x: Vec<usize>,
    session_acc: Vec<f64>,
    avg_acc: Vec<f64>,
}

pub const SESSION_COLUMNS: [&str; 13] = [
    "session",
    "n_input",
    "n_flagged_ood",
    "discovered_k",
    "class_count",
    "threshold",
    "id_acc",
    "ood_acc",
    "session_acc",
    "avg_acc",
    "unknown_recall",
    "cluster_acc",
    "nmi",
];

pub fn report(state_dir: &Path, out: &Path) -> Result<()> {
    let state = load_state(state_dir)?;
    std::fs::create_dir_all(out).map_err(|source| OwlError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut table = Table::create(Some(&out.join("sessions.csv")), &SESSION_COLUMNS)?;
    for l in &state.session_logs {
        table.row([
            l.session_index.to_string(),
            l.n_input.to_string(),
            l.n_flagged_ood.to_string(),
            l.discovered_k.to_string(),
            l.class_count.to_string(),
            num(l.threshold),
            opt(l.id_acc),
            opt(l.ood_acc),
            num(l.session_acc),
            num(l.avg_acc),
            opt(l.unknown_recall),
            opt(l.cluster_acc),
            opt(l.nmi),
        ])?;
    }
    table.finish()?;
    let plot = PlotData {
        x: state.session_logs.iter().map(|l| l.session_index).collect(),
        session_acc: state.session_logs.iter().map(|l| l.session_acc).collect(),
        avg_acc: state.session_logs.iter().map(|l| l.avg_acc).collect(),
    };
    write_json(&out.join("accuracy_curve.json"), &plot)
}

pub fn synth(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: ScenarioSpec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| OwlError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            toml::from_str(&text).map_err(|e| OwlError::Config(format!("{}: {e}", p.display())))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let path = generate(&spec)?.write(out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
