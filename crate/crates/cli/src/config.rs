//! Run configuration: TOML on disk, every field defaulted, unknown keys rejected.
//!
//! Per-stage seeds (dataset, training, oracle, episodes, generation) are derived
//! from the master `seed` when the config is resolved, overwriting whatever the
//! file says, so one number pins a whole run.

use std::fs;
use std::path::{Path, PathBuf};

use genie_core::augment::{AugmentationSpec, Method, SourcePolicy, DEFAULT_GUIDANCE};
use genie_core::data::{default_profile, BucketThresholds, SyntheticTaskConfig};
use genie_core::diffusion::{DenoiserArch, ScheduleConfig, TrainConfig};
use genie_core::eval::{BenchmarkArgs, BoundaryArgs, LogRegConfig, LongTailArgs, OracleConfig};
use genie_core::RngStream;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory. Not echoed into artifacts.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Worker threads, 0 for one per core. Not echoed into artifacts.
    #[serde(skip_serializing)]
    pub threads: usize,
    /// Denoiser checkpoint to load; defaults to `<out>/denoiser.ckpt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub dataset: SyntheticTaskConfig,
    pub schedule: ScheduleConfig,
    pub arch: DenoiserArch,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    pub benchmark: BenchmarkArgs,
    pub specs: Vec<AugmentationSpec>,
    pub generate: GenerateConfig,
    pub longtail: LongTailConfig,
    pub sweep: SweepConfig,
    pub boundary: BoundaryArgs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            checkpoint: None,
            dataset: SyntheticTaskConfig::default(),
            schedule: ScheduleConfig::default(),
            arch: DenoiserArch::default(),
            train: TrainConfig::default(),
            oracle: OracleConfig::default(),
            benchmark: BenchmarkArgs::default(),
            specs: vec![
                AugmentationSpec::none(),
                AugmentationSpec::condsample(4),
                AugmentationSpec::genie(0.8, 4),
            ],
            generate: GenerateConfig::default(),
            longtail: LongTailConfig::default(),
            sweep: SweepConfig::default(),
            boundary: BoundaryArgs::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub method: Method,
    pub r: f64,
    pub w: f64,
    pub per_class_count: usize,
    /// Target classes; empty means every class.
    pub classes: Vec<usize>,
    /// GeNIe source class; unset draws sources from every other class.
    pub source_class: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            method: Method::Genie,
            r: 0.8,
            w: DEFAULT_GUIDANCE,
            per_class_count: 50,
            classes: Vec::new(),
            source_class: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTailConfig {
    pub profile: Vec<usize>,
    pub thresholds: BucketThresholds,
    pub test_per_class: usize,
    pub spec: AugmentationSpec,
    /// Generated samples per Few-bucket class.
    pub cap: usize,
    pub logreg: LogRegConfig,
    pub seed: u64,
}

impl LongTailConfig {
    pub fn args(&self) -> LongTailArgs {
        LongTailArgs {
            cap: self.cap,
            seed: self.seed,
            logreg: self.logreg,
        }
    }
}

impl Default for LongTailConfig {
    fn default() -> Self {
        Self {
            profile: default_profile(),
            thresholds: BucketThresholds::default(),
            test_per_class: 100,
            spec: AugmentationSpec {
                name: "genie".into(),
                source_policy: SourcePolicy::ConfusionTopk(4),
                ..AugmentationSpec::genie(0.8, 0)
            },
            cap: 50,
            logreg: LogRegConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rs: Vec<f64>,
    pub template: AugmentationSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rs: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            template: AugmentationSpec::genie(0.8, 4),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn derive(root: &RngStream, label: &str) -> u64 {
    root.substream(label, 0).next_u64()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Derives every stage seed from the master seed and checks cross-field rules.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let root = RngStream::new(self.seed, 0);
        self.dataset.seed = derive(&root, "dataset");
        self.train.seed = derive(&root, "train");
        self.oracle.seed = derive(&root, "oracle");
        self.benchmark.seed = derive(&root, "episodes");
        self.longtail.seed = derive(&root, "longtail");
        self.boundary.seed = derive(&root, "boundary");

        self.dataset
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for spec in self
            .specs
            .iter()
            .chain([&self.longtail.spec, &self.sweep.template])
        {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(format!("spec {}: {e}", spec.name)))?;
        }
        let mut names: Vec<&str> = self.specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid("spec names must be unique".into()));
        }
        if self.longtail.profile.len() != self.dataset.n_classes {
            return Err(ConfigError::Invalid(format!(
                "longtail profile has {} entries for {} classes",
                self.longtail.profile.len(),
                self.dataset.n_classes
            )));
        }
        if let Some(c) = self
            .generate
            .classes
            .iter()
            .chain(&self.generate.source_class)
            .find(|&&c| c >= self.dataset.n_classes)
        {
            return Err(ConfigError::Invalid(format!(
                "class {c} out of range for {} classes",
                self.dataset.n_classes
            )));
        }
        Ok(self)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("denoiser.ckpt"))
    }

    /// The resolved config as embedded in artifacts.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[dataset]\nsigma = 1.0").is_err());
    }

    #[test]
    fn seeds_follow_the_master_seed() {
        let a = RunConfig::default().resolve().unwrap();
        let b = RunConfig {
            seed: 1,
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_ne!(a.dataset.seed, b.dataset.seed);
        assert_ne!(a.dataset.seed, a.train.seed);
        assert_eq!(a, RunConfig::default().resolve().unwrap());
    }

    #[test]
    fn echo_round_trips_through_toml() {
        let cfg = RunConfig::default().resolve().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back.resolve().unwrap().echo(), cfg.echo());
    }

    #[test]
    fn out_and_threads_stay_out_of_the_echo() {
        let cfg = RunConfig {
            threads: 8,
            out: "elsewhere".into(),
            ..Default::default()
        };
        assert_eq!(cfg.echo(), RunConfig::default().echo());
    }

    #[test]
    fn profile_must_cover_every_class() {
        let mut cfg = RunConfig::default();
        cfg.longtail.profile.pop();
        assert!(matches!(cfg.resolve(), Err(ConfigError::Invalid(_))));
    }
}
