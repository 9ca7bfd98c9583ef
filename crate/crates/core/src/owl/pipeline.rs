use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};

use super::config::OwlConfig;
use super::log::{SessionLog, SessionOutcome};
use crate::cil::{
    class_targets, compute_fisher, init_base, train_linear, IncrementalClassifier, ReplayBuffer, Strategy,
    TrainConfig,
};
use crate::linalg::{mean_of_rows, sq_dist};
use crate::metrics::{cluster_accuracy, cluster_matching, nmi};
use crate::ncd::discover_or_singleton;
use crate::ood::{split_by_threshold, FittedScorer};
use crate::rng;
use crate::store::{ClassRegistry, EmbeddingSet, PipelineState};
use crate::{OwlError, Result};

const TRAIN_STREAM: u64 = 0x5452_4149; // "TRAI"
const NCD_STREAM: u64 = 0x4E43_4453; // "NCDS"

fn session_train_config(cfg: &OwlConfig, seed: u64, session: usize) -> TrainConfig {
    let mut tc = cfg.cil.clone();
    tc.seed = rng::key(seed, &[TRAIN_STREAM, session as u64]);
    tc
}

fn predict(clf: &IncrementalClassifier, strategy: Strategy, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    if strategy.predicts_by_ncm() {
        clf.ncm_predict(x)
    } else {
        Ok(clf.head_predict(x)?.0)
    }
}

fn known_labels(registry: &ClassRegistry) -> BTreeSet<i64> {
    (0..registry.len()).filter_map(|c| registry.eval_label(c)).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Detection rates of a model on labeled data: `(id_acc, ood_acc, rejected)`.
fn detection_rates(
    registry: &ClassRegistry,
    clf: &IncrementalClassifier,
    scorer: &FittedScorer,
    strategy: Strategy,
    x: ArrayView2<f64>,
    truth: &[i64],
) -> Result<(Option<f64>, Option<f64>, usize)> {
    let tau = scorer.threshold.ok_or_else(|| OwlError::State("scorer has no calibrated threshold".into()))?;
    let scores = scorer.score_batch(clf, x)?;
    let pred = predict(clf, strategy, x)?;
    let known = known_labels(registry);
    let id_hits = truth
        .iter()
        .enumerate()
        .filter(|(_, t)| known.contains(t))
        .map(|(i, &t)| (scores[i] >= tau && registry.eval_label(pred[i]) == Some(t)) as u8 as f64);
    let ood_hits = truth
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= 0 && !known.contains(t))
        .map(|(i, _)| (scores[i] < tau) as u8 as f64);
    let rejected = scores.iter().filter(|&&s| s < tau).count();
    Ok((mean(id_hits), mean(ood_hits), rejected))
}

/// Accuracy over samples whose label belongs to a registered class.
fn seen_accuracy(
    registry: &ClassRegistry,
    clf: &IncrementalClassifier,
    strategy: Strategy,
    x: ArrayView2<f64>,
    truth: &[i64],
) -> Result<f64> {
    let known = known_labels(registry);
    let pred = predict(clf, strategy, x)?;
    mean(
        truth
            .iter()
            .enumerate()
            .filter(|(_, t)| known.contains(t))
            .map(|(i, &t)| (registry.eval_label(pred[i]) == Some(t)) as u8 as f64),
    )
    .ok_or_else(|| OwlError::Data("evaluation set has no samples of any seen class".into()))
}

fn average_with(logs: &[SessionLog], acc: f64) -> f64 {
    (logs.iter().map(|l| l.session_acc).sum::<f64>() + acc) / (logs.len() + 1) as f64
}

/// Evaluates the current state on labeled data and appends the record to
/// the state's logs.
pub fn evaluate(state: &mut PipelineState, eval_test: &EmbeddingSet, cfg: &OwlConfig) -> Result<SessionLog> {
    let truth = eval_test.require_labels()?;
    let x = eval_test.features_f64();
    let strategy = cfg.cil.strategy;
    let (id_acc, ood_acc, rejected) =
        detection_rates(&state.registry, &state.classifier, &state.scorer, strategy, x.view(), truth)?;
    let session_acc = seen_accuracy(&state.registry, &state.classifier, strategy, x.view(), truth)?;
    let log = SessionLog {
        session_index: state.next_session(),
        n_input: eval_test.len(),
        n_flagged_ood: rejected,
        discovered_k: 0,
        new_class_ids: Vec::new(),
        class_count: state.registry.len(),
        threshold: state.scorer.threshold.expect("checked by detection_rates"),
        id_acc,
        ood_acc,
        session_acc,
        avg_acc: average_with(&state.session_logs, session_acc),
        unknown_recall: None,
        cluster_acc: None,
        nmi: None,
    };
    state.session_logs.push(log.clone());
    Ok(log)
}

/// Base session: train the classifier on labeled base data, fit the scorer,
/// calibrate its threshold and register the base classes.
///
/// The threshold is calibrated on `val` when given, otherwise on the held-out
/// part of `train`. The base log is evaluated on `val` (or `train`).
pub fn run_base(train: &EmbeddingSet, val: Option<&EmbeddingSet>, cfg: &OwlConfig) -> Result<PipelineState> {
    cfg.validate()?;
    let tc = session_train_config(cfg, cfg.seed, 0);
    let mut clf = init_base(train, &tc)?;
    let y = class_targets(train.require_labels()?)?;
    let x = train.features_f64();
    let c = clf.class_count();

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &t) in y.iter().enumerate() {
        rows[t].push(i);
    }
    let replay = match tc.strategy {
        Strategy::Icarl => {
            let mut buf = ReplayBuffer::new(tc.replay_budget_m);
            for (k, r) in rows.iter().enumerate() {
                buf.add_class(k, x.select(Axis(0), r).view())?;
                clf.set_prototype(k, buf.exemplar_mean(k).expect("just added").view());
            }
            Some(buf)
        }
        _ => None,
    };
    let ewc = match tc.strategy {
        Strategy::Ewc => Some(compute_fisher(&clf, x.view(), &y)?),
        _ => None,
    };

    let mut registry = ClassRegistry::default();
    for r in &rows {
        registry.register(0, false, mean_of_rows(x.view(), r).to_vec(), r.len())?;
    }

    let mut scorer = FittedScorer::fit(&cfg.scorer, train, &clf)?;
    if let Some(v) = val {
        scorer.id_val_scores = scorer.score_batch(&clf, v.features_f64().view())?;
    }
    let scorer = scorer.calibrated(cfg.target_tpr)?;

    let mut state = PipelineState {
        registry,
        classifier: clf,
        scorer,
        session_logs: Vec::new(),
        rng_seed: cfg.seed,
        replay,
        ewc,
    };
    evaluate(&mut state, val.unwrap_or(train), cfg)?;
    let log = state.session_logs.last_mut().expect("just evaluated");
    log.n_input = train.len();
    log.n_flagged_ood = 0;
    Ok(state)
}

/// Reassigns members of clusters with fewer than two samples to the
/// nearest cluster that has at least two, then relabels densely in the
/// original cluster order. Returns labels and per-cluster means.
pub fn merge_small_clusters(x: ArrayView2<f64>, labels: &[usize], k: usize) -> (Vec<usize>, Array2<f64>) {
    let members = |labels: &[usize], k: usize| {
        let mut m: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    };
    let groups = members(labels, k);
    let means: Vec<_> = groups
        .iter()
        .map(|g| (!g.is_empty()).then(|| mean_of_rows(x, g)))
        .collect();
    let large: Vec<usize> = (0..k).filter(|&j| groups[j].len() >= 2).collect();
    let mut merged = labels.to_vec();
    if !large.is_empty() {
        for j in (0..k).filter(|&j| groups[j].len() == 1) {
            let mj = means[j].as_ref().expect("non-empty");
            let target = *large
                .iter()
                .min_by(|&&a, &&b| {
                    let da = sq_dist(mj.view(), means[a].as_ref().expect("large").view());
                    let db = sq_dist(mj.view(), means[b].as_ref().expect("large").view());
                    da.total_cmp(&db)
                })
                .expect("non-empty");
            for &i in &groups[j] {
                merged[i] = target;
            }
        }
    }
    let mut dense = vec![usize::MAX; k];
    let mut next = 0;
    for l in 0..k {
        if merged.contains(&l) {
            dense[l] = next;
            next += 1;
        }
    }
    let out: Vec<usize> = merged.iter().map(|&l| dense[l]).collect();
    let groups = members(&out, next);
    let mut centroids = Array2::zeros((next, x.ncols()));
    for (j, g) in groups.iter().enumerate() {
        centroids.row_mut(j).assign(&mean_of_rows(x, g));
    }
    (out, centroids)
}

/// One open-world session over `input`, whose labels (if any) are used only
/// for evaluation. Returns the updated state and the session outcome.
pub fn run_open_session(
    state: &PipelineState,
    input: &EmbeddingSet,
    eval_test: &EmbeddingSet,
    cfg: &OwlConfig,
) -> Result<(PipelineState, SessionOutcome)> {
    cfg.validate()?;
    state.validate()?;
    let session = state.next_session();
    if session == 0 {
        return Err(OwlError::State("the base session has not been run".into()));
    }
    if input.dim() != state.classifier.dim() {
        return Err(OwlError::Shape(format!(
            "session features are {}-wide, the classifier expects {}",
            input.dim(),
            state.classifier.dim()
        )));
    }
    let strategy = cfg.cil.strategy;
    let tc = session_train_config(cfg, state.rng_seed, session);
    let old = &state.classifier;
    let c_old = old.class_count();
    let known_before = known_labels(&state.registry);

    // 1-2: score and split
    let x = input.features_f64();
    let tau = state
        .scorer
        .threshold
        .ok_or_else(|| OwlError::State("scorer has no calibrated threshold".into()))?;
    let scores = state.scorer.score_batch(old, x.view())?;
    let (id_idx, ood_idx) = split_by_threshold(&scores, tau);

    let truth = input.labels();
    let is_novel = |t: i64| t >= 0 && !known_before.contains(&t);
    let unknown_recall = truth.and_then(|t| {
        let flagged: BTreeSet<usize> = ood_idx.iter().copied().collect();
        mean(
            t.iter()
                .enumerate()
                .filter(|(_, &l)| is_novel(l))
                .map(|(i, _)| flagged.contains(&i) as u8 as f64),
        )
    });

    // 4: discover
    let x_unknown = x.select(Axis(0), &ood_idx);
    let (clusters, centroids) = if ood_idx.is_empty() {
        (Vec::new(), Array2::zeros((0, x.ncols())))
    } else {
        let unknown = input.select(&ood_idx).unlabeled();
        let k = cfg.ncd_k.map(|k| k.min(unknown.len()));
        let seed = rng::key(state.rng_seed, &[NCD_STREAM, session as u64]);
        let found = discover_or_singleton(&unknown, k, seed)?;
        merge_small_clusters(x_unknown.view(), &found.labels, found.k)
    };
    let k = centroids.nrows();

    // 5: register
    let mut registry = state.registry.clone();
    let mut new_ids = Vec::with_capacity(k);
    for j in 0..k {
        let count = clusters.iter().filter(|&&l| l == j).count();
        new_ids.push(registry.register(session, true, centroids.row(j).to_vec(), count)?);
    }

    let (mut cluster_acc, mut cluster_nmi) = (None, None);
    if let Some(t) = truth {
        let flagged_truth: Vec<i64> = ood_idx.iter().map(|&i| t[i]).collect();
        let labeled: Vec<usize> = (0..ood_idx.len()).filter(|&j| flagged_truth[j] >= 0).collect();
        if !labeled.is_empty() {
            let pred: Vec<i64> = labeled.iter().map(|&j| clusters[j] as i64).collect();
            let gt: Vec<i64> = labeled.iter().map(|&j| flagged_truth[j]).collect();
            for (cluster, label) in cluster_matching(&pred, &gt)?.1 {
                registry.entries[c_old + cluster as usize].label_alias = Some(label);
            }
        }
        let novel: Vec<usize> = (0..ood_idx.len()).filter(|&j| is_novel(flagged_truth[j])).collect();
        if !novel.is_empty() {
            let pred: Vec<i64> = novel.iter().map(|&j| clusters[j] as i64).collect();
            let gt: Vec<i64> = novel.iter().map(|&j| flagged_truth[j]).collect();
            cluster_acc = Some(cluster_accuracy(&pred, &gt)?);
            cluster_nmi = Some(nmi(&pred, &gt)?);
        }
    }

    // 3, 6: extend and train
    let mut replay = state.replay.clone();
    let mut ewc = state.ewc.clone();
    let classifier = if k == 0 {
        old.clone()
    } else {
        let extended = old.extend_head(k, centroids.view())?;
        let mut tx = x_unknown.clone();
        let mut ty: Vec<usize> = clusters.iter().map(|&j| c_old + j).collect();
        if cfg.include_pseudo_id && !id_idx.is_empty() {
            let x_id = x.select(Axis(0), &id_idx);
            let (pseudo, _) = old.head_predict(x_id.view())?;
            tx = ndarray::concatenate(Axis(0), &[tx.view(), x_id.view()]).expect("same width");
            ty.extend(pseudo);
        }
        match strategy {
            Strategy::Ncm | Strategy::FscilProto => extended,
            Strategy::Finetune => train_linear(&extended, tx.view(), &ty, &tc, None, None, None)?.0,
            Strategy::Lwf => train_linear(&extended, tx.view(), &ty, &tc, Some(old), None, None)?.0,
            Strategy::Ewc => {
                let trained = train_linear(&extended, tx.view(), &ty, &tc, None, ewc.as_ref(), None)?.0;
                let fresh = compute_fisher(&trained, tx.view(), &ty)?;
                ewc = Some(match ewc {
                    Some(prev) => prev.accumulate(fresh),
                    None => fresh,
                });
                trained
            }
            Strategy::Icarl => {
                let mut trained = train_linear(&extended, tx.view(), &ty, &tc, Some(old), None, replay.as_ref())?.0;
                let buf = replay.get_or_insert_with(|| ReplayBuffer::new(tc.replay_budget_m));
                for (j, &id) in new_ids.iter().enumerate() {
                    let rows: Vec<usize> = (0..clusters.len()).filter(|&i| clusters[i] == j).collect();
                    buf.add_class(id, x_unknown.select(Axis(0), &rows).view())?;
                }
                for class in buf.classes().collect::<Vec<_>>() {
                    trained.set_prototype(class, buf.exemplar_mean(class).expect("listed class").view());
                }
                trained
            }
        }
    };

    // 7: refit the scorer
    let scorer = if k == 0 {
        state.scorer.clone()
    } else if cfg.full_refit {
        let buf = replay
            .as_ref()
            .filter(|r| !r.is_empty())
            .ok_or_else(|| OwlError::Config("full_refit needs the exemplar buffer of the icarl strategy".into()))?;
        let (rx, ry) = buf.training_set(classifier.dim());
        let set = EmbeddingSet::new(rx.mapv(|v| v as f32), Some(ry.iter().map(|&c| c as i64).collect()))?;
        FittedScorer::fit(&cfg.scorer, &set, &classifier)?.calibrated(cfg.target_tpr)?
    } else {
        state.scorer.with_new_classes(centroids.view(), x_unknown.view())?
    };

    // 8: evaluate
    let truth_eval = eval_test.require_labels()?;
    let xe = eval_test.features_f64();
    let (id_acc, ood_acc, _) =
        detection_rates(&state.registry, old, &state.scorer, strategy, xe.view(), truth_eval)?;
    if new_ids.iter().any(|&id| registry.entries[id].label_alias.is_none()) {
        alias_from_eval(&mut registry, &new_ids, &classifier, strategy, xe.view(), truth_eval)?;
    }
    let session_acc = seen_accuracy(&registry, &classifier, strategy, xe.view(), truth_eval)?;

    let log = SessionLog {
        session_index: session,
        n_input: input.len(),
        n_flagged_ood: ood_idx.len(),
        discovered_k: k,
        new_class_ids: new_ids.clone(),
        class_count: registry.len(),
        threshold: scorer.threshold.unwrap_or(tau),
        id_acc,
        ood_acc,
        session_acc,
        avg_acc: average_with(&state.session_logs, session_acc),
        unknown_recall,
        cluster_acc,
        nmi: cluster_nmi,
    };
    let mut session_logs = state.session_logs.clone();
    session_logs.push(log.clone());
    let next = PipelineState {
        registry,
        classifier,
        scorer,
        session_logs,
        rng_seed: state.rng_seed,
        replay,
        ewc,
    };
    next.validate()?;
    let outcome = SessionOutcome {
        session_index: session,
        n_input: input.len(),
        n_flagged_ood: ood_idx.len(),
        discovered_k: k,
        new_class_ids: new_ids,
        log,
    };
    Ok((next, outcome))
}

/// Matches unaliased discovered classes to test labels by Hungarian
/// assignment over the test samples predicted into them.
fn alias_from_eval(
    registry: &mut ClassRegistry,
    new_ids: &[usize],
    clf: &IncrementalClassifier,
    strategy: Strategy,
    x: ArrayView2<f64>,
    truth: &[i64],
) -> Result<()> {
    let open: BTreeSet<usize> = new_ids
        .iter()
        .copied()
        .filter(|&id| registry.entries[id].label_alias.is_none())
        .collect();
    let pred = predict(clf, strategy, x)?;
    let rows: Vec<usize> = (0..pred.len()).filter(|&i| open.contains(&pred[i])).collect();
    if rows.is_empty() {
        return Ok(());
    }
    let p: Vec<i64> = rows.iter().map(|&i| pred[i] as i64).collect();
    let t: Vec<i64> = rows.iter().map(|&i| truth[i]).collect();
    for (class, label) in cluster_matching(&p, &t)?.1 {
        registry.entries[class as usize].label_alias = Some(label);
    }
    Ok(())
}
