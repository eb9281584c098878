//! Imbalanced datasets and the Many / Med / Few bucket rule.

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{build_synthetic, SyntheticTaskConfig};
use crate::error::{Error, Result};
use crate::sample::LabeledSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Many,
    Med,
    Few,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Many, Bucket::Med, Bucket::Few];
}

/// Few: `count < few_below`; Many: `count > many_above`; Med otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BucketThresholds {
    pub few_below: usize,
    pub many_above: usize,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        Self {
            few_below: 20,
            many_above: 100,
        }
    }
}

impl BucketThresholds {
    pub fn bucket(&self, count: usize) -> Bucket {
        if count < self.few_below {
            Bucket::Few
        } else if count > self.many_above {
            Bucket::Many
        } else {
            Bucket::Med
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailDataset {
    pub config: SyntheticTaskConfig,
    pub counts: Vec<usize>,
    pub buckets: Vec<Bucket>,
    pub thresholds: BucketThresholds,
    pub train: Vec<LabeledSample>,
}

impl LongTailDataset {
    pub fn classes_in(&self, bucket: Bucket) -> Vec<usize> {
        (0..self.buckets.len())
            .filter(|&c| self.buckets[c] == bucket)
            .collect()
    }
}

/// Geometric per-class counts from `max` down to `min`, rounded.
pub fn geometric_profile(n_classes: usize, max: usize, min: usize) -> Vec<usize> {
    if n_classes == 1 {
        return vec![max];
    }
    let ratio = (min as f64 / max as f64).powf(1.0 / (n_classes - 1) as f64);
    (0..n_classes)
        .map(|i| ((max as f64) * ratio.powi(i as i32)).round().max(1.0) as usize)
        .collect()
}

/// The desk-scale default: 10 classes, 200 down to 5 samples.
pub fn default_profile() -> Vec<usize> {
    geometric_profile(10, 200, 5)
}

/// Draws the synthetic task with enough samples for the largest class, then keeps
/// the first `profile[c]` samples of class `c`.
pub fn build_longtail(
    profile: &[usize],
    cfg: &SyntheticTaskConfig,
    thresholds: BucketThresholds,
) -> Result<LongTailDataset> {
    if profile.len() != cfg.n_classes {
        return Err(Error::invalid(format!(
            "profile has {} entries for {} classes",
            profile.len(),
            cfg.n_classes
        )));
    }
    if profile.contains(&0) {
        return Err(Error::invalid("every class needs at least one sample"));
    }
    let full = build_synthetic(&SyntheticTaskConfig {
        samples_per_class: *profile.iter().max().expect("non-empty"),
        ..cfg.clone()
    })?;
    let by_class = full.class_indices();
    let mut train = Vec::with_capacity(profile.iter().sum());
    for (class, &count) in profile.iter().enumerate() {
        train.extend(
            by_class[class][..count]
                .iter()
                .map(|&i| full.samples[i].clone()),
        );
    }
    Ok(LongTailDataset {
        config: cfg.clone(),
        counts: profile.to_vec(),
        buckets: profile.iter().map(|&c| thresholds.bucket(c)).collect(),
        thresholds,
        train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_rule() {
        let t = BucketThresholds::default();
        assert_eq!(t.bucket(5), Bucket::Few);
        assert_eq!(t.bucket(19), Bucket::Few);
        assert_eq!(t.bucket(20), Bucket::Med);
        assert_eq!(t.bucket(100), Bucket::Med);
        assert_eq!(t.bucket(101), Bucket::Many);
        assert_eq!(t.bucket(200), Bucket::Many);
    }

    #[test]
    fn default_profile_shape() {
        let p = default_profile();
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], 200);
        assert_eq!(p[9], 5);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn totals_match_profile() {
        let cfg = SyntheticTaskConfig::default();
        let lt = build_longtail(&default_profile(), &cfg, BucketThresholds::default()).unwrap();
        assert_eq!(lt.train.len(), default_profile().iter().sum::<usize>());
        assert_eq!(lt.buckets[0], Bucket::Many);
        assert_eq!(lt.buckets[9], Bucket::Few);
        let total: usize = Bucket::ALL.iter().map(|&b| lt.classes_in(b).len()).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn profile_length_mismatch() {
        let cfg = SyntheticTaskConfig::default();
        assert!(build_longtail(&[10, 10], &cfg, BucketThresholds::default()).is_err());
    }
}
