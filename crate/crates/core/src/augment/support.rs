//! Support-set augmentation with a fixed per-class budget.

use crate::augment::confusion::{pick_source, ConfusionMatrix};
use crate::augment::mix::{mix_baselines, traditional_strong, traditional_weak, MixMode};
use crate::augment::operators::{condsample_batch, genie_batch, img2img_batch};
use crate::augment::spec::{AugmentationSpec, Method, SourcePolicy};
use crate::data::DatasetKind;
use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::eval::Classifier;
use crate::rng::RngStream;
use crate::sample::LabeledSample;

/// What the operators need besides the support set itself.
#[derive(Clone, Copy)]
pub struct AugmentContext<'a> {
    pub denoiser: Option<&'a Denoiser>,
    /// `label_map[i]` is the denoiser class behind support label `i`.
    pub label_map: &'a [usize],
    pub kind: DatasetKind,
    pub noise_sigma: f64,
}

/// Cycles through a shuffled pool, reshuffling at every wrap.
struct Cycler {
    pool: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(pool: Vec<usize>, rng: &mut RngStream) -> Self {
        let mut c = Self { pool, pos: 0 };
        rng.shuffle(&mut c.pool);
        c
    }

    fn next(&mut self, rng: &mut RngStream) -> usize {
        if self.pos == self.pool.len() {
            rng.shuffle(&mut self.pool);
            self.pos = 0;
        }
        self.pos += 1;
        self.pool[self.pos - 1]
    }
}

struct Job {
    target: usize,
    source: Option<usize>,
    partner: Option<usize>,
}

fn plan_jobs(
    support: &[LabeledSample],
    spec: &AugmentationSpec,
    n_classes: usize,
    cm: Option<&ConfusionMatrix>,
    rng: &mut RngStream,
) -> Result<Vec<Job>> {
    let count = spec.generated_per_class();
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, s) in support.iter().enumerate() {
        by_class[s.y].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::MissingClass(c));
    }
    if spec.method == Method::Genie && n_classes < 2 {
        return Err(Error::invalid("genie needs at least two classes"));
    }
    let mut jobs = Vec::with_capacity(n_classes * count);
    for target in 0..n_classes {
        let others: Vec<usize> = (0..support.len())
            .filter(|&i| support[i].y != target)
            .collect();
        let mut own = Cycler::new(by_class[target].clone(), rng);
        match spec.method {
            Method::None => {}
            Method::Condsample => jobs.extend((0..count).map(|_| Job {
                target,
                source: None,
                partner: None,
            })),
            Method::Genie => match spec.source_policy {
                SourcePolicy::RandomOtherClass => {
                    let mut pool = Cycler::new(others, rng);
                    for _ in 0..count {
                        jobs.push(Job {
                            target,
                            source: Some(pool.next(rng)),
                            partner: None,
                        });
                    }
                }
                SourcePolicy::ConfusionTopk(k) => {
                    let cm = cm.ok_or_else(|| {
                        Error::invalid("confusion_topk source policy requires a confusion matrix")
                    })?;
                    for _ in 0..count {
                        let class = pick_source(target, cm, k, rng)?.class;
                        let members = &by_class[class];
                        jobs.push(Job {
                            target,
                            source: Some(members[rng.below(members.len())]),
                            partner: None,
                        });
                    }
                }
            },
            Method::Img2img | Method::Traditional | Method::TraditionalStrong => {
                for _ in 0..count {
                    jobs.push(Job {
                        target,
                        source: Some(own.next(rng)),
                        partner: None,
                    });
                }
            }
            Method::Cutmix | Method::Mixup => {
                if others.is_empty() {
                    return Err(Error::invalid("mixing needs at least two classes"));
                }
                for _ in 0..count {
                    jobs.push(Job {
                        target,
                        source: Some(own.next(rng)),
                        partner: Some(others[rng.below(others.len())]),
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// Adds exactly `per_class_count` generated samples to every class and keeps the
/// original support intact, so every method yields `N * (K + per_class_count)`
/// samples for an `N`-way `K`-shot support. Generated samples follow the originals,
/// ordered by (class, index).
///
/// GeNIe sources come from other classes: with `RandomOtherClass` the pool of all
/// other-class support samples is cycled in shuffled order, so `(N - 1) K`
/// samples per class use every other image exactly once.
pub fn augment_support(
    support: &[LabeledSample],
    spec: &AugmentationSpec,
    ctx: &AugmentContext,
    cm: Option<&ConfusionMatrix>,
    rng: &RngStream,
) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let n_classes = ctx.label_map.len();
    if let Some(bad) = support.iter().find(|s| s.y >= n_classes) {
        return Err(Error::invalid(format!(
            "support label {} outside label map",
            bad.y
        )));
    }
    let mut out = support.to_vec();
    if spec.generated_per_class() == 0 {
        return Ok(out);
    }
    let mut plan_rng = rng.substream("plan", 0);
    let jobs = plan_jobs(support, spec, n_classes, cm, &mut plan_rng)?;
    let mut job_rngs: Vec<RngStream> = (0..jobs.len())
        .map(|j| rng.substream("job", j as u64))
        .collect();

    let denoiser = || {
        ctx.denoiser
            .ok_or_else(|| Error::invalid(format!("{:?} requires a trained denoiser", spec.method)))
    };
    let in_model_space = |i: usize| {
        let mut s = support[i].clone();
        s.y = ctx.label_map[s.y];
        s
    };

    let generated: Vec<LabeledSample> = match spec.method {
        Method::None => Vec::new(),
        Method::Genie | Method::Img2img => {
            let model = denoiser()?;
            let sources: Vec<LabeledSample> = jobs
                .iter()
                .map(|j| in_model_space(j.source.expect("planned source")))
                .collect();
            let refs: Vec<&LabeledSample> = sources.iter().collect();
            let mut made = if spec.method == Method::Genie {
                let targets: Vec<usize> = jobs.iter().map(|j| ctx.label_map[j.target]).collect();
                genie_batch(
                    &refs,
                    &targets,
                    spec.r,
                    model,
                    model.schedule(),
                    &mut job_rngs,
                    spec.w,
                )?
            } else {
                img2img_batch(
                    &refs,
                    spec.r,
                    model,
                    model.schedule(),
                    &mut job_rngs,
                    spec.w,
                )?
            };
            for (s, job) in made.iter_mut().zip(&jobs) {
                s.y = job.target;
                s.source_class = job.source.map(|i| support[i].y);
            }
            made
        }
        Method::Condsample => {
            let model = denoiser()?;
            let classes: Vec<usize> = jobs.iter().map(|j| ctx.label_map[j.target]).collect();
            let mut made =
                condsample_batch(&classes, model, model.schedule(), &mut job_rngs, spec.w)?;
            for (s, job) in made.iter_mut().zip(&jobs) {
                s.y = job.target;
            }
            made
        }
        Method::Traditional | Method::TraditionalStrong => {
            let dim = support[0].x.len();
            let mut centroids = vec![vec![0.0; dim]; n_classes];
            let mut counts = vec![0usize; n_classes];
            for s in support {
                counts[s.y] += 1;
                for (c, v) in centroids[s.y].iter_mut().zip(&s.x) {
                    *c += v;
                }
            }
            for (c, n) in centroids.iter_mut().zip(&counts) {
                c.iter_mut().for_each(|v| *v /= *n as f64);
            }
            jobs.iter()
                .zip(job_rngs.iter_mut())
                .map(|(job, jr)| {
                    let src = &support[job.source.expect("planned source")];
                    if spec.method == Method::Traditional {
                        traditional_weak(src, ctx.kind, ctx.noise_sigma, &centroids[src.y], jr)
                    } else {
                        traditional_strong(src, ctx.noise_sigma, jr)
                    }
                })
                .collect()
        }
        Method::Cutmix | Method::Mixup => {
            let mode = if spec.method == Method::Cutmix {
                MixMode::Cutmix
            } else {
                MixMode::Mixup
            };
            let grid = (ctx.kind == DatasetKind::Glyphs8x8).then_some((8, 8));
            jobs.iter()
                .zip(job_rngs.iter_mut())
                .map(|(job, jr)| {
                    let a = &support[job.source.expect("planned source")];
                    let b = &support[job.partner.expect("planned partner")];
                    let lambda = jr.uniform();
                    mix_baselines(a, b, lambda, mode, grid, jr)
                })
                .collect::<Result<_>>()?
        }
    };
    out.extend(generated);
    Ok(out)
}

/// Fraction of samples whose oracle label (argmax, ties to the lowest index)
/// equals the assigned label.
pub fn label_consistency<C: Classifier + ?Sized>(
    samples: &[LabeledSample],
    oracle: &C,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("label consistency needs at least one sample"));
    }
    let agree = samples
        .iter()
        .filter(|s| oracle.predict(&s.x) == s.y)
        .count();
    Ok(agree as f64 / samples.len() as f64)
}
