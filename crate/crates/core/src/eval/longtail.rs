//! Long-tail evaluation: generate only for Few-bucket classes, retrain the head,
//! report per-bucket accuracy on a balanced test set.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{
    condsample_batch, genie_batch, img2img_batch, pick_source, AugmentationSpec, ConfusionMatrix,
    Method, SourcePolicy,
};
use crate::data::{Bucket, LongTailDataset};
use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::eval::logreg::{feature_matrix, fit_logreg, LogRegConfig};
use crate::eval::oracle::OracleModel;
use crate::eval::report::{BucketAccuracy, BucketReport, EvalReport};
use crate::eval::Classifier;
use crate::rng::RngStream;
use crate::sample::LabeledSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTailArgs {
    /// Generated samples per Few-bucket class.
    pub cap: usize,
    pub seed: u64,
    pub logreg: LogRegConfig,
}

impl Default for LongTailArgs {
    fn default() -> Self {
        Self {
            cap: 50,
            seed: 0,
            logreg: LogRegConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongTailOutcome {
    pub report: EvalReport,
    /// Confusion of the real-data classifier on its own training data.
    pub confusion: ConfusionMatrix,
    pub generated: Vec<LabeledSample>,
}

/// Generation plan: `cap` samples for every Few class. GeNIe sources come from
/// the `k` most confused classes of a head trained on the real data.
fn generate(
    lt: &LongTailDataset,
    spec: &AugmentationSpec,
    cap: usize,
    cm: &ConfusionMatrix,
    denoiser: Option<&Denoiser>,
    rng: &RngStream,
) -> Result<Vec<LabeledSample>> {
    let few = lt.classes_in(Bucket::Few);
    if cap == 0 || few.is_empty() || spec.method == Method::None {
        return Ok(Vec::new());
    }
    let model = denoiser.ok_or_else(|| Error::invalid("long-tail generation needs a denoiser"))?;
    let n_classes = lt.counts.len();
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, s) in lt.train.iter().enumerate() {
        by_class[s.y].push(i);
    }
    let mut plan = rng.substream("plan", 0);
    let mut targets = Vec::with_capacity(few.len() * cap);
    let mut sources = Vec::with_capacity(few.len() * cap);
    for &target in &few {
        for _ in 0..cap {
            let source_class = match (spec.method, spec.source_policy) {
                (Method::Genie, SourcePolicy::ConfusionTopk(k)) => {
                    pick_source(target, cm, k, &mut plan)?.class
                }
                (Method::Genie, SourcePolicy::RandomOtherClass) => {
                    let c = plan.below(n_classes - 1);
                    if c >= target {
                        c + 1
                    } else {
                        c
                    }
                }
                _ => target,
            };
            let members = &by_class[source_class];
            targets.push(target);
            sources.push(&lt.train[members[plan.below(members.len())]]);
        }
    }
    let mut rngs: Vec<RngStream> = (0..targets.len())
        .map(|j| rng.substream("job", j as u64))
        .collect();
    let schedule = model.schedule();
    match spec.method {
        Method::Genie => genie_batch(
            &sources, &targets, spec.r, model, schedule, &mut rngs, spec.w,
        ),
        Method::Img2img => img2img_batch(&sources, spec.r, model, schedule, &mut rngs, spec.w),
        Method::Condsample => condsample_batch(&targets, model, schedule, &mut rngs, spec.w),
        other => Err(Error::invalid(format!(
            "{other:?} is not supported for long-tail runs"
        ))),
    }
}

pub fn bucket_report(
    lt: &LongTailDataset,
    head: &impl Classifier,
    test: &[LabeledSample],
    generated_per_class: Vec<usize>,
) -> Result<BucketReport> {
    let tx = feature_matrix(test)?;
    let predictions = head.predict_batch(tx.view());
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    for (p, s) in predictions.iter().zip(test) {
        let b = Bucket::ALL
            .iter()
            .position(|&b| b == lt.buckets[s.y])
            .expect("bucket");
        total[b] += 1;
        if *p == s.y {
            correct[b] += 1;
        }
    }
    let overall = correct.iter().sum::<usize>() as f64 / test.len() as f64;
    Ok(BucketReport {
        buckets: Bucket::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| total[*i] > 0)
            .map(|(i, &bucket)| BucketAccuracy {
                bucket,
                accuracy: correct[i] as f64 / total[i] as f64,
                test_count: total[i],
            })
            .collect(),
        overall,
        generated_per_class,
    })
}

/// Trains a head on the real imbalanced data, derives the confusion matrix on
/// that training data, adds `cap` generated samples to each Few class, retrains
/// and scores on `test`.
pub fn run_longtail(
    lt: &LongTailDataset,
    test: &[LabeledSample],
    spec: &AugmentationSpec,
    denoiser: Option<&Denoiser>,
    oracle: Option<&OracleModel>,
    args: &LongTailArgs,
) -> Result<LongTailOutcome> {
    spec.validate()?;
    let started = Instant::now();
    let n_classes = lt.counts.len();
    let (real_head, _) = fit_logreg(&lt.train, n_classes, &args.logreg)?;
    let train_x = feature_matrix(&lt.train)?;
    let truth: Vec<usize> = lt.train.iter().map(|s| s.y).collect();
    let confusion = ConfusionMatrix::from_predictions(
        &truth,
        &real_head.predict_batch(train_x.view()),
        n_classes,
    )?;

    let rng = RngStream::new(args.seed, 0).substream("longtail", spec.seed);
    let generated = generate(lt, spec, args.cap, &confusion, denoiser, &rng)?;
    let mut generated_per_class = vec![0; n_classes];
    for s in &generated {
        generated_per_class[s.y] += 1;
    }

    let head = if generated.is_empty() {
        real_head
    } else {
        let mut all = lt.train.clone();
        all.extend(generated.iter().cloned());
        fit_logreg(&all, n_classes, &args.logreg)?.0
    };
    let buckets = bucket_report(lt, &head, test, generated_per_class)?;
    let mut report = EvalReport::from_accuracies(
        spec.name.clone(),
        spec.method,
        vec![buckets.overall],
        args.seed,
        serde_json::json!({ "longtail": args, "spec": spec, "profile": lt.counts }),
    );
    if let (Some(oracle), false) = (oracle, generated.is_empty()) {
        let gx = feature_matrix(&generated)?;
        let agree = oracle
            .predict_batch(gx.view())
            .iter()
            .zip(&generated)
            .filter(|(&p, s)| p == s.y)
            .count();
        report.label_consistency = Some(agree as f64 / generated.len() as f64);
    }
    report.buckets = Some(buckets);
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(LongTailOutcome {
        report,
        confusion,
        generated,
    })
}
