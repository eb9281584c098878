#![allow(dead_code)]

use std::sync::OnceLock;

use genie_core::data::{build_synthetic, Dataset, SyntheticTaskConfig};
use genie_core::diffusion::{
    train_denoiser, Denoiser, DenoiserArch, ScheduleConfig, TrainConfig, TrainReport,
};
use genie_core::eval::{train_oracle_for, OracleConfig, OracleModel};

pub fn default_dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| build_synthetic(&SyntheticTaskConfig::default()).unwrap())
}

/// Denoiser trained with default settings on the default blobs.
pub fn default_denoiser() -> &'static (Denoiser, TrainReport) {
    static MODEL: OnceLock<(Denoiser, TrainReport)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let ds = default_dataset();
        let schedule = ScheduleConfig::default().build().unwrap();
        train_denoiser(
            &ds.samples,
            ds.n_classes(),
            &schedule,
            &DenoiserArch::default(),
            &TrainConfig::default(),
        )
        .unwrap()
    })
}

pub fn default_oracle() -> &'static OracleModel {
    static ORACLE: OnceLock<OracleModel> = OnceLock::new();
    ORACLE.get_or_init(|| {
        train_oracle_for(&SyntheticTaskConfig::default(), &OracleConfig::default()).unwrap()
    })
}

/// Small, tightly clustered blobs that train in well under a second.
pub fn tight_config() -> SyntheticTaskConfig {
    SyntheticTaskConfig {
        n_classes: 4,
        class_separation: 6.0,
        noise_sigma: 0.5,
        context_strength: 2.0,
        ..SyntheticTaskConfig::default()
    }
}

pub fn quick_denoiser(
    cfg: &SyntheticTaskConfig,
    steps: usize,
    cfg_dropout_prob: f64,
) -> (Denoiser, TrainReport) {
    let ds = build_synthetic(cfg).unwrap();
    let schedule = ScheduleConfig::default().build().unwrap();
    train_denoiser(
        &ds.samples,
        ds.n_classes(),
        &schedule,
        &DenoiserArch::default(),
        &TrainConfig {
            steps,
            cfg_dropout_prob,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}

use genie_core::augment::{condsample_batch, genie_batch, img2img_batch};
use genie_core::{LabeledSample, RngStream};
use rayon::prelude::*;

pub enum Op {
    Genie(f64),
    Img2img(f64),
    Condsample,
}

/// Runs an operator over `(source, target)` pairs in parallel chunks; pair `i`
/// draws from `root.substream("pair", i)`.
pub fn generate(
    model: &Denoiser,
    op: &Op,
    pairs: &[(&LabeledSample, usize)],
    root: &RngStream,
    w: f64,
) -> Vec<LabeledSample> {
    const CHUNK: usize = 50;
    let schedule = model.schedule();
    pairs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rngs: Vec<RngStream> = (0..chunk.len())
                .map(|i| root.substream("pair", (c * CHUNK + i) as u64))
                .collect();
            let sources: Vec<&LabeledSample> = chunk.iter().map(|p| p.0).collect();
            let targets: Vec<usize> = chunk.iter().map(|p| p.1).collect();
            match op {
                Op::Genie(r) => genie_batch(&sources, &targets, *r, model, schedule, &mut rngs, w),
                Op::Img2img(r) => img2img_batch(&sources, *r, model, schedule, &mut rngs, w),
                Op::Condsample => condsample_batch(&targets, model, schedule, &mut rngs, w),
            }
            .unwrap()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// `count` GeNIe pairs with targets cycling over classes and a random source
/// sample from a different class.
pub fn genie_pairs(ds: &Dataset, count: usize, seed: u64) -> Vec<(&LabeledSample, usize)> {
    let n = ds.n_classes();
    let by_class = ds.class_indices();
    let mut rng = RngStream::new(seed, 0).substream("pairs", 0);
    (0..count)
        .map(|i| {
            let target = i % n;
            let mut source = rng.below(n - 1);
            if source >= target {
                source += 1;
            }
            let pool = &by_class[source];
            (&ds.samples[pool[rng.below(pool.len())]], target)
        })
        .collect()
}

pub fn label_histogram(
    oracle: &impl genie_core::eval::Classifier,
    samples: &[LabeledSample],
    n: usize,
) -> Vec<f64> {
    let mut hist = vec![0.0; n];
    for s in samples {
        hist[oracle.predict(&s.x)] += 1.0 / samples.len() as f64;
    }
    hist
}
