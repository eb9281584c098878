//! Episodic few-shot evaluation with paired episode streams.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_support, AugmentContext, AugmentationSpec, ConfusionMatrix, Method, SourcePolicy,
};
use crate::data::{sample_episode, Dataset, Episode};
use crate::diffusion::Denoiser;
use crate::error::Result;
use crate::eval::logreg::{feature_matrix, fit_logreg, LogRegConfig};
use crate::eval::oracle::OracleModel;
use crate::eval::report::{paired_difference, EvalReport, PairedDifference};
use crate::eval::Classifier;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkArgs {
    pub n_way: usize,
    pub k_shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub seed: u64,
    pub logreg: LogRegConfig,
}

impl Default for BenchmarkArgs {
    fn default() -> Self {
        Self {
            n_way: 5,
            k_shot: 1,
            query: 16,
            episodes: 200,
            seed: 0,
            logreg: LogRegConfig::default(),
        }
    }
}

/// Shared models for evaluation.
#[derive(Clone, Copy, Default)]
pub struct EvalResources<'a> {
    pub denoiser: Option<&'a Denoiser>,
    pub oracle: Option<&'a OracleModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub accuracy: f64,
    pub support_size: usize,
    /// Generated samples the oracle agrees with, and generated samples in total.
    pub consistent: usize,
    pub generated: usize,
}

fn episode_rng(seed: u64, episode: usize) -> RngStream {
    RngStream::new(seed, 0).substream("episode", episode as u64)
}

/// Generation stream for one (episode, spec seed) pair. Specs sharing a seed share
/// their generation noise within an episode.
pub fn generation_rng(seed: u64, episode: usize, spec: &AugmentationSpec) -> RngStream {
    RngStream::new(seed, 0)
        .substream("generation", episode as u64)
        .substream("spec", spec.seed)
}

/// Builds episode `index` of the stream keyed by `seed`.
pub fn episode_at(dataset: &Dataset, args: &BenchmarkArgs, index: usize) -> Result<Episode> {
    sample_episode(
        dataset,
        args.n_way,
        args.k_shot,
        args.query,
        &mut episode_rng(args.seed, index),
    )
}

/// Augments the support set, fits the head on raw vectors and scores the query set.
pub fn eval_episode(
    episode: &Episode,
    dataset: &Dataset,
    spec: &AugmentationSpec,
    resources: EvalResources,
    logreg: &LogRegConfig,
    rng: &RngStream,
) -> Result<EpisodeOutcome> {
    let n = episode.n_way();
    let cm = match spec.source_policy {
        SourcePolicy::ConfusionTopk(_) => {
            let (head, _) = fit_logreg(&episode.support, n, logreg)?;
            let x = feature_matrix(&episode.support)?;
            let truth: Vec<usize> = episode.support.iter().map(|s| s.y).collect();
            Some(ConfusionMatrix::from_predictions(
                &truth,
                &head.predict_batch(x.view()),
                n,
            )?)
        }
        SourcePolicy::RandomOtherClass => None,
    };
    let ctx = AugmentContext {
        denoiser: resources.denoiser,
        label_map: &episode.classes,
        kind: dataset.config.kind,
        noise_sigma: dataset.config.noise_sigma,
    };
    let augmented = augment_support(&episode.support, spec, &ctx, cm.as_ref(), rng)?;
    let (head, _) = fit_logreg(&augmented, n, logreg)?;
    let qx = feature_matrix(&episode.query)?;
    let predictions = head.predict_batch(qx.view());
    let correct = predictions
        .iter()
        .zip(&episode.query)
        .filter(|(&p, s)| p == s.y)
        .count();

    let generated = &augmented[episode.support.len()..];
    let (consistent, judged) = match resources.oracle {
        Some(oracle) if spec.method.needs_denoiser() && !generated.is_empty() => {
            let gx = feature_matrix(generated)?;
            let agree = oracle
                .predict_batch(gx.view())
                .iter()
                .zip(generated)
                .filter(|(&p, s)| p == episode.classes[s.y])
                .count();
            (agree, generated.len())
        }
        _ => (0, 0),
    };
    Ok(EpisodeOutcome {
        accuracy: correct as f64 / episode.query.len() as f64,
        support_size: augmented.len(),
        consistent,
        generated: judged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub reports: Vec<EvalReport>,
    /// Every spec against the first one, episode by episode.
    pub paired: Vec<PairedDifference>,
    /// Dataset classes of every episode, in episode order.
    pub episode_classes: Vec<Vec<usize>>,
}

impl BenchmarkResult {
    pub fn report(&self, spec: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.spec == spec)
    }
}

/// Runs every spec on the same episode stream. Episodes are independent work
/// units keyed by `(seed, index)`; the output does not depend on the size of the
/// rayon pool the call runs in.
pub fn run_benchmark(
    dataset: &Dataset,
    specs: &[AugmentationSpec],
    args: &BenchmarkArgs,
    resources: EvalResources,
) -> Result<BenchmarkResult> {
    if args.episodes < 2 {
        return Err(crate::Error::invalid(
            "a benchmark needs at least 2 episodes",
        ));
    }
    if specs.is_empty() {
        return Err(crate::Error::Empty("benchmark specs"));
    }
    for spec in specs {
        spec.validate()?;
    }
    // Per episode: its classes and every spec's outcome with its runtime.
    type Scored = (Vec<usize>, Vec<(EpisodeOutcome, f64)>);
    let per_episode: Vec<Scored> = (0..args.episodes)
        .into_par_iter()
        .map(|e| -> Result<_> {
            let episode = episode_at(dataset, args, e)?;
            let outcomes = specs
                .iter()
                .map(|spec| {
                    let t0 = Instant::now();
                    let rng = generation_rng(args.seed, e, spec);
                    let out = eval_episode(&episode, dataset, spec, resources, &args.logreg, &rng)?;
                    Ok((out, t0.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((episode.classes.clone(), outcomes))
        })
        .collect::<Result<Vec<_>>>()?;

    let config = serde_json::to_value(args)?;
    let reports: Vec<EvalReport> = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let outcomes: Vec<&(EpisodeOutcome, f64)> =
                per_episode.iter().map(|(_, o)| &o[i]).collect();
            let accuracies = outcomes.iter().map(|(o, _)| o.accuracy).collect();
            let mut report = EvalReport::from_accuracies(
                spec.name.clone(),
                spec.method,
                accuracies,
                args.seed,
                serde_json::json!({ "benchmark": config, "spec": spec }),
            );
            report.support_sizes = outcomes.iter().map(|(o, _)| o.support_size).collect();
            let generated: usize = outcomes.iter().map(|(o, _)| o.generated).sum();
            if generated > 0 {
                let consistent: usize = outcomes.iter().map(|(o, _)| o.consistent).sum();
                report.label_consistency = Some(consistent as f64 / generated as f64);
            }
            report.runtime_secs = outcomes.iter().map(|(_, t)| t).sum();
            report
        })
        .collect();
    let paired = reports
        .iter()
        .skip(1)
        .map(|r| paired_difference(r, &reports[0]))
        .collect();
    Ok(BenchmarkResult {
        reports,
        paired,
        episode_classes: per_episode.into_iter().map(|(c, _)| c).collect(),
    })
}

/// Fairness rule: every augmenting spec ends each episode with the same number
/// of labeled support samples, so methods differ only in what they generate.
pub fn check_fairness(result: &BenchmarkResult) -> Result<()> {
    let mut augmenting = result.reports.iter().filter(|r| r.method != Method::None);
    if let Some(first) = augmenting.next() {
        if let Some(other) = augmenting.find(|r| r.support_sizes != first.support_sizes) {
            return Err(crate::Error::Invariant(format!(
                "support sizes of {} differ from {}",
                other.spec, first.spec
            )));
        }
    }
    Ok(())
}
