use std::collections::BTreeSet;

use ndarray::Axis;

use super::classifier::IncrementalClassifier;
use super::ewc::{compute_fisher, EwcState};
use super::fscil::fscil_update;
use super::replay::ReplayBuffer;
use super::train::{class_means, class_targets, init_base, train_linear, Strategy, TrainConfig};
use crate::store::EmbeddingSet;
use crate::{OwlError, Result};

/// Supervised class-incremental run: every session comes with ground-truth
/// labels, and labels are class ids. A session's labels may repeat known
/// classes; labels beyond the current class count must be dense from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRun {
    pub classifier: IncrementalClassifier,
    pub replay: Option<ReplayBuffer>,
    pub ewc: Option<EwcState>,
}

impl LabeledRun {
    pub fn base(train: &EmbeddingSet, cfg: &TrainConfig) -> Result<Self> {
        let mut classifier = init_base(train, cfg)?;
        let y = class_targets(train.require_labels()?)?;
        let x = train.features_f64();
        let replay = match cfg.strategy {
            Strategy::Icarl => {
                let mut buf = ReplayBuffer::new(cfg.replay_budget_m);
                add_exemplars(&mut buf, &mut classifier, &x, &y, 0..y.iter().max().map_or(0, |m| m + 1))?;
                Some(buf)
            }
            _ => None,
        };
        let ewc = match cfg.strategy {
            Strategy::Ewc => Some(compute_fisher(&classifier, x.view(), &y)?),
            _ => None,
        };
        Ok(LabeledRun {
            classifier,
            replay,
            ewc,
        })
    }

    /// One incremental session trained according to `cfg.strategy`.
    pub fn step(&self, train: &EmbeddingSet, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let old = &self.classifier;
        let c_old = old.class_count();
        let y = class_targets(train.require_labels()?)?;
        let new: BTreeSet<usize> = y.iter().copied().filter(|&t| t >= c_old).collect();
        if let Some((i, &t)) = new.iter().enumerate().find(|&(i, &t)| t != c_old + i) {
            return Err(OwlError::Data(format!(
                "new labels must be dense from {c_old}; found {t} where {} was expected",
                c_old + i
            )));
        }
        let x = train.features_f64();
        let n_new = new.len();
        let extended = if n_new == 0 {
            old.clone()
        } else {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] >= c_old).collect();
            let ty: Vec<usize> = rows.iter().map(|&i| y[i] - c_old).collect();
            let protos = class_means(x.select(Axis(0), &rows).view(), &ty, n_new)?;
            old.extend_head(n_new, protos.view())?
        };
        let mut replay = self.replay.clone();
        let mut ewc = self.ewc.clone();
        let classifier = match cfg.strategy {
            Strategy::Ncm | Strategy::FscilProto => extended,
            Strategy::Finetune => train_linear(&extended, x.view(), &y, cfg, None, None, None)?.0,
            Strategy::Lwf => train_linear(&extended, x.view(), &y, cfg, Some(old), None, None)?.0,
            Strategy::Ewc => {
                let trained = train_linear(&extended, x.view(), &y, cfg, None, ewc.as_ref(), None)?.0;
                let fresh = compute_fisher(&trained, x.view(), &y)?;
                ewc = Some(match ewc {
                    Some(prev) => prev.accumulate(fresh),
                    None => fresh,
                });
                trained
            }
            Strategy::Icarl => {
                let mut trained = train_linear(&extended, x.view(), &y, cfg, Some(old), None, replay.as_ref())?.0;
                let buf = replay.get_or_insert_with(|| ReplayBuffer::new(cfg.replay_budget_m));
                add_exemplars(buf, &mut trained, &x, &y, c_old..c_old + n_new)?;
                trained
            }
        };
        Ok(LabeledRun {
            classifier,
            replay,
            ewc,
        })
    }

    /// Few-shot session: `k` shots of every new class become prototypes.
    pub fn few_shot_step(&self, shots: &EmbeddingSet, k: usize) -> Result<Self> {
        Ok(LabeledRun {
            classifier: fscil_update(&self.classifier, shots, k)?,
            replay: self.replay.clone(),
            ewc: self.ewc.clone(),
        })
    }

    /// Accuracy over the samples of `test` whose label is a known class.
    pub fn accuracy(&self, test: &EmbeddingSet, strategy: Strategy) -> Result<f64> {
        let c = self.classifier.class_count() as i64;
        let labels = test.require_labels()?;
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| (0..c).contains(&labels[i])).collect();
        if rows.is_empty() {
            return Err(OwlError::Data("test set has no samples of any known class".into()));
        }
        let x = test.features_f64().select(Axis(0), &rows);
        let pred = if strategy.predicts_by_ncm() {
            self.classifier.ncm_predict(x.view())?
        } else {
            self.classifier.head_predict(x.view())?.0
        };
        let hits = rows.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p as i64).count();
        Ok(hits as f64 / rows.len() as f64)
    }
}

fn add_exemplars(
    buf: &mut ReplayBuffer,
    clf: &mut IncrementalClassifier,
    x: &ndarray::Array2<f64>,
    y: &[usize],
    classes: std::ops::Range<usize>,
) -> Result<()> {
    for c in classes {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        buf.add_class(c, x.select(Axis(0), &rows).view())?;
    }
    for c in buf.classes().collect::<Vec<_>>() {
        clf.set_prototype(c, buf.exemplar_mean(c).expect("listed class").view());
    }
    Ok(())
}
