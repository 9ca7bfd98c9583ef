use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::linalg::{mean_of_rows, normalize_rows, sq_dist};
use crate::{OwlError, Result};

/// Greedy herding: repeatedly add the sample that keeps the running mean of
/// the selection closest to the class mean, on L2-normalized features.
/// Ties go to the smallest index.
pub fn herding_select(x: ArrayView2<f64>, m: usize) -> Result<Vec<usize>> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(OwlError::Argument(format!("cannot select {m} exemplars from {n} samples")));
    }
    let xn = normalize_rows(x);
    let all: Vec<usize> = (0..n).collect();
    let mu = mean_of_rows(xn.view(), &all);
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut sum = Array1::<f64>::zeros(x.ncols());
    for step in 0..m {
        let denom = (step + 1) as f64;
        let mut best = None;
        let mut best_cost = f64::INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let candidate = (&sum + &xn.row(i)) / denom;
            let cost = sq_dist(mu.view(), candidate.view());
            if cost < best_cost {
                best_cost = cost;
                best = Some(i);
            }
        }
        let i = best.expect("m ≤ n leaves a candidate");
        taken[i] = true;
        sum += &xn.row(i);
        chosen.push(i);
    }
    Ok(chosen)
}

/// Stored feature exemplars, at most `budget` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    budget: usize,
    exemplars: BTreeMap<usize, Array2<f64>>,
}

impl ReplayBuffer {
    pub fn new(budget: usize) -> Self {
        ReplayBuffer {
            budget,
            exemplars: BTreeMap::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.exemplars.keys().copied()
    }

    pub fn exemplars(&self, class: usize) -> Option<&Array2<f64>> {
        self.exemplars.get(&class)
    }

    /// Selects up to `budget` exemplars of `class` by herding and stores them,
    /// replacing any previous set for that class.
    pub fn add_class(&mut self, class: usize, x: ArrayView2<f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Err(OwlError::Data(format!("no samples for class {class}")));
        }
        let idx = herding_select(x, self.budget.min(x.nrows()))?;
        self.exemplars.insert(class, x.select(Axis(0), &idx));
        Ok(())
    }

    /// Inserts an exemplar block as-is (used when restoring state).
    pub fn insert_raw(&mut self, class: usize, x: Array2<f64>) -> Result<()> {
        if x.nrows() > self.budget {
            return Err(OwlError::State(format!(
                "class {class} has {} exemplars, budget is {}",
                x.nrows(),
                self.budget
            )));
        }
        self.exemplars.insert(class, x);
        Ok(())
    }

    pub fn exemplar_mean(&self, class: usize) -> Option<Array1<f64>> {
        let x = self.exemplars.get(&class)?;
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Some(mean_of_rows(x.view(), &rows))
    }

    /// All exemplars stacked in class order with their class ids.
    pub fn training_set(&self, dim: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (&c, x) in &self.exemplars {
            rows.extend(x.iter().copied());
            y.extend(std::iter::repeat_n(c, x.nrows()));
        }
        (Array2::from_shape_vec((y.len(), dim), rows).expect("exemplar widths agree"), y)
    }
}
