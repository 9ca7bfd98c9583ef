//! Deterministic Gaussian open-world scenarios.
//!
//! Class centers are distinct points `±a·e_i` of the scaled cross-polytope
//! in `d` dimensions, drawn in a seed-keyed order, with `a = separation·σ/√2`
//! so any two centers are at least `separation·σ` apart. That allows up to
//! `2d` classes. Every sample draws its noise from its own counter-based
//! stream, so output depends only on the spec.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::metrics::round_half_up;
use crate::rng::{self, CounterRng};
use crate::store::{save_embeddings, EmbeddingSet, Manifest, Role, SessionManifest};
use crate::{OwlError, Result};

const CENTER_STREAM: u64 = 0x4345_4E54; // "CENT"
const SAMPLE_STREAM: u64 = 0x5341_4D50; // "SAMP"

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub novel_classes: usize,
    /// Fraction of the session's samples drawn from already known classes.
    pub known_fraction: f64,
    /// Samples of every novel class. A session without novel classes holds
    /// this many samples of every known class instead.
    pub samples_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub dataset: String,
    pub dim: usize,
    pub base_classes: usize,
    pub base_samples_per_class: usize,
    pub val_samples_per_class: usize,
    /// Test samples per seen class in every session's test set.
    pub test_samples_per_class: usize,
    pub sessions: Vec<SessionSpec>,
    /// Minimum center distance in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            dataset: "synth".into(),
            dim: 16,
            base_classes: 5,
            base_samples_per_class: 100,
            val_samples_per_class: 20,
            test_samples_per_class: 50,
            sessions: vec![SessionSpec {
                novel_classes: 3,
                known_fraction: 0.5,
                samples_per_class: 100,
            }],
            separation: 8.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn total_classes(&self) -> usize {
        self.base_classes + self.sessions.iter().map(|s| s.novel_classes).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(OwlError::Argument("dim must be at least 1".into()));
        }
        if self.base_classes < 2 {
            return Err(OwlError::Argument("base_classes must be at least 2".into()));
        }
        if !(self.separation > 0.0 && self.sigma > 0.0) {
            return Err(OwlError::Argument("separation and sigma must be positive".into()));
        }
        if self.base_samples_per_class == 0 {
            return Err(OwlError::Argument("base_samples_per_class must be positive".into()));
        }
        for (i, s) in self.sessions.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.known_fraction) {
                return Err(OwlError::Argument(format!("session {}: known_fraction outside [0, 1]", i + 1)));
            }
            if s.novel_classes > 0 && s.known_fraction >= 1.0 {
                return Err(OwlError::Argument(format!(
                    "session {}: known_fraction 1 leaves no room for novel classes",
                    i + 1
                )));
            }
        }
        let capacity = 2 * self.dim;
        if self.total_classes() > capacity {
            return Err(OwlError::Argument(format!(
                "{} classes do not fit the {capacity} lattice points of dimension {}",
                self.total_classes(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// One generated session: unlabeled-at-pipeline-time input (ground truth
/// kept in its labels) and a labeled test set over all seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    /// One row per ground-truth class.
    pub centers: Array2<f64>,
    pub base_train: EmbeddingSet,
    pub base_val: EmbeddingSet,
    pub sessions: Vec<SessionData>,
}

/// Sample count drawn from known classes so that it equals
/// `known_fraction · N` (rounded half up) with `novel` novel samples.
pub fn known_count(novel: usize, known_fraction: f64) -> usize {
    if known_fraction <= 0.0 {
        return 0;
    }
    let mut n = novel;
    while n - round_half_up(known_fraction * n as f64, 0) as usize != novel {
        n += 1;
    }
    n - novel
}

fn centers(spec: &ScenarioSpec) -> Array2<f64> {
    let d = spec.dim;
    let key = rng::key(spec.seed, &[CENTER_STREAM]);
    let mut order: Vec<(u64, usize)> = (0..2 * d).map(|p| (rng::unit_at(key, p as u64).to_bits(), p)).collect();
    order.sort_unstable();
    let a = spec.separation * spec.sigma / std::f64::consts::SQRT_2;
    let mut out = Array2::zeros((spec.total_classes(), d));
    for (c, &(_, p)) in order.iter().take(spec.total_classes()).enumerate() {
        out[(c, p / 2)] = if p % 2 == 0 { a } else { -a };
    }
    out
}

struct Drawer<'a> {
    spec: &'a ScenarioSpec,
    centers: &'a Array2<f64>,
}

impl Drawer<'_> {
    /// Draws the listed classes; `stream` separates files.
    fn draw(&self, stream: &[u64], classes: &[usize]) -> Result<EmbeddingSet> {
        let d = self.spec.dim;
        let mut x = Array2::<f32>::zeros((classes.len(), d));
        for (row, &c) in classes.iter().enumerate() {
            let mut tags = stream.to_vec();
            tags.extend([SAMPLE_STREAM, row as u64]);
            let mut r = CounterRng::from_tags(self.spec.seed, &tags);
            let center: Array1<f64> = self.centers.row(c).to_owned();
            for j in 0..d {
                x[(row, j)] = (center[j] + self.spec.sigma * r.next_normal()) as f32;
            }
        }
        EmbeddingSet::new(x, Some(classes.iter().map(|&c| c as i64).collect()))
    }
}

fn repeat_classes(classes: std::ops::Range<usize>, per_class: usize) -> Vec<usize> {
    classes.flat_map(|c| std::iter::repeat_n(c, per_class)).collect()
}

/// Generates the scenario in memory.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let centers = centers(spec);
    let drawer = Drawer {
        spec,
        centers: &centers,
    };
    let b = spec.base_classes;
    let base_train = drawer.draw(&[0, 0], &repeat_classes(0..b, spec.base_samples_per_class))?;
    let base_val = drawer.draw(&[0, 1], &repeat_classes(0..b, spec.val_samples_per_class))?;

    let mut seen = b;
    let mut sessions = Vec::with_capacity(spec.sessions.len());
    for (i, s) in spec.sessions.iter().enumerate() {
        let t = (i + 1) as u64;
        let classes = if s.novel_classes == 0 {
            repeat_classes(0..seen, s.samples_per_class)
        } else {
            let novel = repeat_classes(seen..seen + s.novel_classes, s.samples_per_class);
            let n_known = known_count(novel.len(), s.known_fraction);
            let mut all: Vec<usize> = (0..n_known).map(|j| j % seen).collect();
            all.extend(novel);
            all
        };
        seen += s.novel_classes;
        let train = drawer.draw(&[t, 0], &classes)?;
        let test = drawer.draw(&[t, 2], &repeat_classes(0..seen, spec.test_samples_per_class))?;
        sessions.push(SessionData { train, test });
    }
    Ok(Scenario {
        spec: spec.clone(),
        centers,
        base_train,
        base_val,
        sessions,
    })
}

impl Scenario {
    fn files(&self) -> Vec<(usize, Role, bool, &EmbeddingSet, String)> {
        let mut out = vec![
            (0, Role::BaseTrain, true, &self.base_train, "base_train".to_string()),
            (0, Role::BaseVal, true, &self.base_val, "base_val".to_string()),
        ];
        for (i, s) in self.sessions.iter().enumerate() {
            let t = i + 1;
            out.push((t, Role::SessionTrain, false, &s.train, format!("session{t}_train")));
            out.push((t, Role::SessionTest, true, &s.test, format!("session{t}_test")));
        }
        out
    }

    /// Manifest with paths relative to the directory [`write`](Self::write) uses.
    pub fn manifest(&self) -> Manifest {
        Manifest {
            dataset: self.spec.dataset.clone(),
            dim: self.spec.dim,
            sessions: self
                .files()
                .into_iter()
                .map(|(t, role, labeled, _, stem)| SessionManifest {
                    session_index: t,
                    role,
                    feature_path: PathBuf::from(format!("{stem}_features.npy")),
                    label_path: Some(PathBuf::from(format!("{stem}_labels.npy"))),
                    labeled,
                })
                .collect(),
            root: PathBuf::new(),
        }
    }

    /// Writes every set as NPY plus `manifest.json` into `dir` and returns
    /// the manifest path. Session inputs keep their ground-truth label file
    /// but are marked unlabeled.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| OwlError::io(dir, e))?;
        for (_, _, _, set, stem) in self.files() {
            save_embeddings(
                set,
                &dir.join(format!("{stem}_features.npy")),
                Some(&dir.join(format!("{stem}_labels.npy"))),
            )?;
        }
        let path = dir.join("manifest.json");
        self.manifest().save(&path)?;
        Ok(path)
    }
}
