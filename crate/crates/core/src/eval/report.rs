use serde::{Deserialize, Serialize};

use crate::augment::Method;
use crate::data::Bucket;

/// `1.96 * s / sqrt(E)` with `s` the sample standard deviation.
pub fn ci95(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = mean(values);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    1.96 * var.sqrt() / (n as f64).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub bucket: Bucket,
    pub accuracy: f64,
    pub test_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub buckets: Vec<BucketAccuracy>,
    pub overall: f64,
    /// Generated samples added per class.
    pub generated_per_class: Vec<usize>,
}

impl BucketReport {
    pub fn accuracy(&self, bucket: Bucket) -> Option<f64> {
        self.buckets
            .iter()
            .find(|b| b.bucket == bucket)
            .map(|b| b.accuracy)
    }

    pub fn weighted_mean(&self) -> f64 {
        let total: usize = self.buckets.iter().map(|b| b.test_count).sum();
        self.buckets
            .iter()
            .map(|b| b.accuracy * b.test_count as f64)
            .sum::<f64>()
            / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: String,
    pub method: Method,
    pub episode_accuracies: Vec<f64>,
    pub mean: f64,
    pub ci95: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<BucketReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_consistency: Option<f64>,
    /// Augmented support size of every episode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_sizes: Vec<usize>,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Wall-clock seconds. Kept out of serialized reports so they stay
    /// byte-reproducible; emitted separately as timing.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl EvalReport {
    pub fn from_accuracies(
        spec: String,
        method: Method,
        accuracies: Vec<f64>,
        seed: u64,
        config: serde_json::Value,
    ) -> Self {
        Self {
            spec,
            method,
            mean: mean(&accuracies),
            ci95: ci95(&accuracies),
            episode_accuracies: accuracies,
            buckets: None,
            label_consistency: None,
            support_sizes: Vec::new(),
            seed,
            config,
            runtime_secs: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub spec: String,
    pub baseline: String,
    pub mean_difference: f64,
    pub ci95: f64,
}

pub fn paired_difference(spec: &EvalReport, baseline: &EvalReport) -> PairedDifference {
    let diffs: Vec<f64> = spec
        .episode_accuracies
        .iter()
        .zip(&baseline.episode_accuracies)
        .map(|(a, b)| a - b)
        .collect();
    PairedDifference {
        spec: spec.spec.clone(),
        baseline: baseline.spec.clone(),
        mean_difference: mean(&diffs),
        ci95: ci95(&diffs),
    }
}
