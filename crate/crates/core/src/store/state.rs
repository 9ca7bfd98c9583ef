//! Pipeline state directories.
//!
//! Layout:
//!
//! * `state.json`: version string, seed, and for every numeric artifact the
//!   names and shapes of the blocks packed into its NPY file.
//! * `classifier.npy`, `scorer.npy`: 1-D `<f8` arrays of concatenated blocks.
//! * `registry.json`, `logs.json`.
//! * `replay.npy`, `ewc.npy`: only when the run keeps exemplars or an EWC anchor.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::npy;
use super::registry::ClassRegistry;
use crate::cil::{EwcState, HeadKind, IncrementalClassifier, ReplayBuffer};
use crate::ood::{FittedScorer, ScorerConfig, Subspace};
use crate::owl::SessionLog;
use crate::{OwlError, Result};

pub const STATE_VERSION: &str = "owl-state-v1";

/// Everything needed to continue a run in a later process.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub registry: ClassRegistry,
    pub classifier: IncrementalClassifier,
    pub scorer: FittedScorer,
    pub session_logs: Vec<SessionLog>,
    pub rng_seed: u64,
    pub replay: Option<ReplayBuffer>,
    pub ewc: Option<EwcState>,
}

impl PipelineState {
    pub fn validate(&self) -> Result<()> {
        self.registry.validate()?;
        if self.classifier.class_count() != self.registry.len() {
            return Err(OwlError::State(format!(
                "classifier has {} classes, registry {}",
                self.classifier.class_count(),
                self.registry.len()
            )));
        }
        if self.scorer.class_count() != self.registry.len() {
            return Err(OwlError::State(format!(
                "scorer knows {} classes, registry {}",
                self.scorer.class_count(),
                self.registry.len()
            )));
        }
        for (i, log) in self.session_logs.iter().enumerate() {
            if log.session_index != i {
                return Err(OwlError::State(format!(
                    "log {i} is for session {}; logs must be consecutive from 0",
                    log.session_index
                )));
            }
        }
        Ok(())
    }

    /// Index the next open session will get.
    pub fn next_session(&self) -> usize {
        self.session_logs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Block {
    name: String,
    shape: Vec<usize>,
}

impl Block {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Default)]
struct Packer {
    data: Vec<f64>,
    blocks: Vec<Block>,
}

impl Packer {
    fn push(&mut self, name: &str, shape: Vec<usize>, values: impl IntoIterator<Item = f64>) {
        let before = self.data.len();
        self.data.extend(values);
        debug_assert_eq!(self.data.len() - before, shape.iter().product::<usize>());
        self.blocks.push(Block {
            name: name.to_string(),
            shape,
        });
    }

    fn matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.push(name, vec![m.nrows(), m.ncols()], m.iter().copied());
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.push(name, vec![v.len()], v.iter().copied());
    }

    fn scalar(&mut self, name: &str, v: f64) {
        self.push(name, vec![1], [v]);
    }
}

struct Unpacker<'a> {
    file: &'static str,
    data: &'a [f64],
    blocks: Vec<(&'a Block, usize)>,
}

impl<'a> Unpacker<'a> {
    fn new(file: &'static str, data: &'a [f64], blocks: &'a [Block]) -> Result<Self> {
        let mut offset = 0;
        let mut placed = Vec::with_capacity(blocks.len());
        for b in blocks {
            placed.push((b, offset));
            offset += b.len();
        }
        if offset != data.len() {
            return Err(OwlError::Consistency(format!(
                "{file}: layout describes {offset} values, file holds {}",
                data.len()
            )));
        }
        Ok(Unpacker {
            file,
            data,
            blocks: placed,
        })
    }

    fn find(&self, name: &str) -> Option<(&'a Block, &'a [f64])> {
        self.blocks
            .iter()
            .find(|(b, _)| b.name == name)
            .map(|&(b, off)| (b, &self.data[off..off + b.len()]))
    }

    fn require(&self, name: &str) -> Result<(&'a Block, &'a [f64])> {
        self.find(name)
            .ok_or_else(|| OwlError::Consistency(format!("{}: missing block '{name}'", self.file)))
    }

    fn matrix_opt(&self, name: &str) -> Result<Option<Array2<f64>>> {
        match self.find(name) {
            None => Ok(None),
            Some((b, v)) => match b.shape.as_slice() {
                [r, c] => Ok(Some(Array2::from_shape_vec((*r, *c), v.to_vec()).expect("length checked"))),
                s => Err(OwlError::Consistency(format!("{}: block '{name}' has shape {s:?}", self.file))),
            },
        }
    }

    fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        self.require(name)?;
        Ok(self.matrix_opt(name)?.expect("presence checked"))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.require(name)?.1.to_vec())
    }

    fn scalar_opt(&self, name: &str) -> Result<Option<f64>> {
        match self.find(name) {
            None => Ok(None),
            Some((_, [v])) => Ok(Some(*v)),
            Some(_) => Err(OwlError::Consistency(format!("{}: block '{name}' is not a scalar", self.file))),
        }
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        self.require(name)?;
        Ok(self.scalar_opt(name)?.expect("presence checked"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierMeta {
    head_kind: HeadKind,
    blocks: Vec<Block>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScorerMeta {
    config: ScorerConfig,
    blocks: Vec<Block>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayMeta {
    budget: usize,
    classes: Vec<usize>,
    blocks: Vec<Block>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EwcMeta {
    blocks: Vec<Block>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    version: String,
    rng_seed: u64,
    classifier: ClassifierMeta,
    scorer: ScorerMeta,
    replay: Option<ReplayMeta>,
    ewc: Option<EwcMeta>,
}

fn pack_classifier(clf: &IncrementalClassifier) -> Packer {
    let mut p = Packer::default();
    p.matrix("weights", clf.weights());
    p.vector("bias", clf.bias().as_slice().expect("contiguous"));
    p.matrix("prototypes", clf.prototypes());
    p.scalar("cosine_scale", clf.cosine_scale());
    p
}

fn unpack_classifier(meta: &ClassifierMeta, data: &[f64]) -> Result<IncrementalClassifier> {
    let u = Unpacker::new("classifier.npy", data, &meta.blocks)?;
    let clf = IncrementalClassifier {
        weights: u.matrix("weights")?,
        bias: Array1::from(u.vector("bias")?),
        prototypes: u.matrix("prototypes")?,
        head_kind: meta.head_kind,
        cosine_scale: u.scalar("cosine_scale")?,
    };
    // re-run the constructor checks without renormalizing stored rows
    IncrementalClassifier::new(
        clf.weights.clone(),
        clf.bias.clone(),
        clf.prototypes.clone(),
        HeadKind::Linear,
        clf.cosine_scale,
    )?;
    Ok(clf)
}

fn pack_scorer(s: &FittedScorer) -> Packer {
    let mut p = Packer::default();
    p.matrix("class_means", &s.class_means);
    if let Some(l) = &s.precision_factor {
        p.matrix("precision_factor", l);
    }
    if let Some(sub) = &s.subspace {
        p.matrix("principal_basis", &sub.basis);
        p.vector("principal_mean", sub.mean.as_slice().expect("contiguous"));
        p.scalar("alpha", sub.alpha);
    }
    if let Some(bank) = &s.train_features {
        p.matrix("train_features", bank);
    }
    if let Some(t) = s.threshold {
        p.scalar("threshold", t);
    }
    p.vector("id_val_scores", &s.id_val_scores);
    p
}

fn unpack_scorer(meta: &ScorerMeta, data: &[f64]) -> Result<FittedScorer> {
    let u = Unpacker::new("scorer.npy", data, &meta.blocks)?;
    let subspace = match u.matrix_opt("principal_basis")? {
        Some(basis) => Some(Subspace {
            basis,
            mean: Array1::from(u.vector("principal_mean")?),
            alpha: u.scalar("alpha")?,
        }),
        None => None,
    };
    meta.config.validate()?;
    Ok(FittedScorer {
        config: meta.config.clone(),
        class_means: u.matrix("class_means")?,
        precision_factor: u.matrix_opt("precision_factor")?,
        subspace,
        train_features: u.matrix_opt("train_features")?,
        threshold: u.scalar_opt("threshold")?,
        id_val_scores: u.vector("id_val_scores")?,
    })
}

fn pack_replay(r: &ReplayBuffer) -> (Packer, Vec<usize>) {
    let mut p = Packer::default();
    let classes: Vec<usize> = r.classes().collect();
    for &c in &classes {
        p.matrix(&format!("class_{c}"), r.exemplars(c).expect("listed class"));
    }
    (p, classes)
}

fn unpack_replay(meta: &ReplayMeta, data: &[f64]) -> Result<ReplayBuffer> {
    let u = Unpacker::new("replay.npy", data, &meta.blocks)?;
    let mut r = ReplayBuffer::new(meta.budget);
    for &c in &meta.classes {
        r.insert_raw(c, u.matrix(&format!("class_{c}"))?)?;
    }
    Ok(r)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| OwlError::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| OwlError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| OwlError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OwlError::Format(format!("{}: {e}", path.display())))
}

fn write_packed(path: &Path, p: &Packer) -> Result<()> {
    npy::write_f64_vector(path, &p.data)
}

/// Writes `state` into `dir`, creating the directory if needed.
pub fn save_state(state: &PipelineState, dir: &Path) -> Result<()> {
    state.validate()?;
    fs::create_dir_all(dir).map_err(|e| OwlError::io(dir, e))?;

    let clf = pack_classifier(&state.classifier);
    let scorer = pack_scorer(&state.scorer);
    write_packed(&dir.join("classifier.npy"), &clf)?;
    write_packed(&dir.join("scorer.npy"), &scorer)?;

    let replay_meta = match &state.replay {
        Some(r) => {
            let (p, classes) = pack_replay(r);
            write_packed(&dir.join("replay.npy"), &p)?;
            Some(ReplayMeta {
                budget: r.budget(),
                classes,
                blocks: p.blocks,
            })
        }
        None => None,
    };
    let ewc_meta = match &state.ewc {
        Some(e) => {
            let mut p = Packer::default();
            p.vector("fisher_diag", &e.fisher_diag);
            p.vector("theta_star", &e.theta_star);
            write_packed(&dir.join("ewc.npy"), &p)?;
            Some(EwcMeta { blocks: p.blocks })
        }
        None => None,
    };
    // stale optional payloads from an earlier save would be misleading
    for (present, name) in [(replay_meta.is_some(), "replay.npy"), (ewc_meta.is_some(), "ewc.npy")] {
        let path = dir.join(name);
        if !present && path.exists() {
            fs::remove_file(&path).map_err(|e| OwlError::io(&path, e))?;
        }
    }

    write_json(&dir.join("registry.json"), &state.registry)?;
    write_json(&dir.join("logs.json"), &state.session_logs)?;
    let header = StateHeader {
        version: STATE_VERSION.to_string(),
        rng_seed: state.rng_seed,
        classifier: ClassifierMeta {
            head_kind: state.classifier.head_kind(),
            blocks: clf.blocks,
        },
        scorer: ScorerMeta {
            config: state.scorer.config.clone(),
            blocks: scorer.blocks,
        },
        replay: replay_meta,
        ewc: ewc_meta,
    };
    // the header goes last so a partially written directory never loads
    write_json(&dir.join("state.json"), &header)
}

/// Reads a state directory written by [`save_state`].
pub fn load_state(dir: &Path) -> Result<PipelineState> {
    let header_path = dir.join("state.json");
    if !header_path.exists() {
        return Err(OwlError::Version(format!(
            "{} holds no saved state (state.json missing)",
            dir.display()
        )));
    }
    let raw: serde_json::Value = read_json(&header_path)?;
    match raw.get("version").and_then(|v| v.as_str()) {
        Some(STATE_VERSION) => {}
        Some(other) => {
            return Err(OwlError::Version(format!(
                "state version '{other}', this build reads '{STATE_VERSION}'"
            )))
        }
        None => return Err(OwlError::Version("state.json has no version string".into())),
    }
    let header: StateHeader =
        serde_json::from_value(raw).map_err(|e| OwlError::Format(format!("{}: {e}", header_path.display())))?;

    let classifier = unpack_classifier(&header.classifier, &npy::read_f64_vector(&dir.join("classifier.npy"))?)?;
    let scorer = unpack_scorer(&header.scorer, &npy::read_f64_vector(&dir.join("scorer.npy"))?)?;
    let replay = match &header.replay {
        Some(meta) => Some(unpack_replay(meta, &npy::read_f64_vector(&dir.join("replay.npy"))?)?),
        None => None,
    };
    let ewc = match &header.ewc {
        Some(meta) => {
            let data = npy::read_f64_vector(&dir.join("ewc.npy"))?;
            let u = Unpacker::new("ewc.npy", &data, &meta.blocks)?;
            Some(EwcState {
                fisher_diag: u.vector("fisher_diag")?,
                theta_star: u.vector("theta_star")?,
            })
        }
        None => None,
    };
    let state = PipelineState {
        registry: read_json(&dir.join("registry.json"))?,
        classifier,
        scorer,
        session_logs: read_json(&dir.join("logs.json"))?,
        rng_seed: header.rng_seed,
        replay,
        ewc,
    };
    state.validate()?;
    Ok(state)
}
