use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Counts with rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    /// Symmetrized confusion between two classes.
    pub fn mass(&self, a: usize, b: usize) -> u64 {
        self.counts[a][b] + self.counts[b][a]
    }

    /// Up to `k` classes other than `target`, by descending symmetric mass with
    /// ascending index breaking ties. Zero-mass classes are dropped whenever at
    /// least one class has positive mass.
    pub fn most_confused(&self, target: usize, k: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.n_classes()).filter(|&c| c != target).collect();
        others.sort_by(|&a, &b| {
            self.mass(target, b)
                .cmp(&self.mass(target, a))
                .then(a.cmp(&b))
        });
        others.truncate(k);
        if others.iter().any(|&c| self.mass(target, c) > 0) {
            others.retain(|&c| self.mass(target, c) > 0);
        }
        others
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePick {
    pub class: usize,
    /// True when no off-diagonal mass existed and the pick was uniform over all
    /// other classes.
    pub fallback: bool,
}

/// Picks a source class for `target` uniformly among its `k` most confused classes.
pub fn pick_source(
    target: usize,
    cm: &ConfusionMatrix,
    k: usize,
    rng: &mut RngStream,
) -> Result<SourcePick> {
    let n = cm.n_classes();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if n < 2 || target >= n {
        return Err(Error::invalid(format!(
            "target {target} invalid for {n} classes (need at least 2)"
        )));
    }
    let has_mass = (0..n).any(|c| c != target && cm.mass(target, c) > 0);
    if !has_mass {
        let others: Vec<usize> = (0..n).filter(|&c| c != target).collect();
        return Ok(SourcePick {
            class: others[rng.below(others.len())],
            fallback: true,
        });
    }
    let top = cm.most_confused(target, k);
    Ok(SourcePick {
        class: top[rng.below(top.len())],
        fallback: false,
    })
}
