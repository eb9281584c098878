//! Boundary occupancy: how close generated samples sit to the oracle's
//! decision boundaries, and how much source context they keep.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{condsample_batch, genie_batch};
use crate::data::{context_features, Dataset, DatasetKind};
use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::eval::logreg::feature_matrix;
use crate::eval::Classifier;
use crate::rng::RngStream;
use crate::sample::LabeledSample;

pub const MIN_SAMPLES_PER_METHOD: usize = 50;

/// Samples of one method. `sources[i]` is the real sample that `samples[i]` was
/// derived from (or, for unconditioned generation, paired with).
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSamples {
    pub method: String,
    pub samples: Vec<LabeledSample>,
    pub sources: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projector {
    /// First two coordinates.
    Identity,
    /// Top two principal components of the real samples.
    Pca,
}

impl Projector {
    pub fn for_kind(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Blobs2d => Projector::Identity,
            DatasetKind::Glyphs8x8 => Projector::Pca,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    /// True when PCA was requested but the covariance was degenerate.
    pub fallback: bool,
}

impl Projection {
    fn coordinates(dim: usize) -> Self {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = 1.0;
        if dim > 1 {
            b[1] = 1.0;
        }
        Self {
            mean: vec![0.0; dim],
            axes: [a, b],
            fallback: false,
        }
    }

    pub fn fit(projector: Projector, real: &[LabeledSample]) -> Result<Self> {
        let x = feature_matrix(real)?;
        let dim = x.ncols();
        match projector {
            Projector::Identity => Ok(Self::coordinates(dim)),
            Projector::Pca => {
                let mean = x
                    .mean_axis(ndarray::Axis(0))
                    .ok_or(Error::Empty("projection data"))?;
                let centered = &x - &mean;
                let cov = centered.t().dot(&centered) / x.nrows() as f64;
                match top_two_components(&cov) {
                    Some(axes) => Ok(Self {
                        mean: mean.to_vec(),
                        axes,
                        fallback: false,
                    }),
                    None => Ok(Self {
                        fallback: true,
                        ..Self::coordinates(dim)
                    }),
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> (f64, f64) {
        let dot = |axis: &[f64]| {
            x.iter()
                .zip(&self.mean)
                .zip(axis)
                .map(|((v, m), a)| (v - m) * a)
                .sum::<f64>()
        };
        (dot(&self.axes[0]), dot(&self.axes[1]))
    }
}

/// Power iteration with deflation. `None` when the leading eigenvalues vanish.
fn top_two_components(cov: &Array2<f64>) -> Option<[Vec<f64>; 2]> {
    let dim = cov.nrows();
    if dim < 2 {
        return None;
    }
    let scale = cov.diag().iter().cloned().fold(0.0, f64::max);
    if scale <= 1e-12 {
        return None;
    }
    let mut m = cov.clone();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(2);
    for k in 0..2 {
        // Deterministic start that is unlikely to be orthogonal to the top component.
        let mut v = Array1::from_iter((0..dim).map(|i| 1.0 + ((i + k) % 7) as f64 * 0.1));
        v /= v.dot(&v).sqrt();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let next = m.dot(&v);
            let norm = next.dot(&next).sqrt();
            if norm <= 1e-12 * scale {
                return None;
            }
            let next = next / norm;
            let done = (&next - &v).mapv(f64::abs).sum() < 1e-12;
            v = next;
            lambda = norm;
            if done {
                break;
            }
        }
        if lambda <= 1e-9 * scale {
            return None;
        }
        let outer = v
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&v.view().insert_axis(ndarray::Axis(0)));
        m = m - outer * lambda;
        out.push(v.to_vec());
    }
    let second = out.pop()?;
    let first = out.pop()?;
    Some([first, second])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub count: usize,
    pub mean_margin: f64,
    pub median_margin: f64,
    /// Mean distance between a sample's context features and its source's.
    pub context_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub method: String,
    pub label: usize,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub stats: Vec<MethodStats>,
    pub points: Vec<BoundaryPoint>,
    pub projection: Projection,
}

impl BoundaryReport {
    pub fn stats_for(&self, method: &str) -> Option<&MethodStats> {
        self.stats.iter().find(|s| s.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,method,label,margin\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.x, p.y, p.method, p.label, p.margin
            ));
        }
        out
    }
}

/// Oracle top-1 minus top-2 probability.
pub fn margins(oracle: &impl Classifier, samples: &[LabeledSample]) -> Result<Vec<f64>> {
    let x = feature_matrix(samples)?;
    Ok(oracle
        .predict_proba_batch(x.view())
        .rows()
        .into_iter()
        .map(|row| {
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &p in row {
                if p > a {
                    b = a;
                    a = p;
                } else if p > b {
                    b = p;
                }
            }
            if b.is_finite() {
                a - b
            } else {
                a
            }
        })
        .collect())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `real` fits the projection; `groups` are scored and exported in order.
pub fn boundary_analysis(
    groups: &[MethodSamples],
    real: &[LabeledSample],
    kind: DatasetKind,
    oracle: &impl Classifier,
    projector: Projector,
) -> Result<BoundaryReport> {
    if groups.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "boundary analysis needs at least 2 methods, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups
        .iter()
        .find(|g| g.samples.len() < MIN_SAMPLES_PER_METHOD)
    {
        return Err(Error::InsufficientSamples(format!(
            "method {} has {} samples, need {MIN_SAMPLES_PER_METHOD}",
            g.method,
            g.samples.len()
        )));
    }
    let projection = Projection::fit(projector, real)?;
    let mut stats = Vec::with_capacity(groups.len());
    let mut points = Vec::new();
    for g in groups {
        let m = margins(oracle, &g.samples)?;
        let context_distance = match &g.sources {
            Some(sources) => {
                if sources.len() != g.samples.len() {
                    return Err(Error::DimensionMismatch {
                        expected: g.samples.len(),
                        got: sources.len(),
                    });
                }
                let total: f64 = g
                    .samples
                    .iter()
                    .zip(sources)
                    .map(|(s, src)| {
                        let a = context_features(kind, &s.x);
                        let b = context_features(kind, src);
                        a.iter()
                            .zip(&b)
                            .map(|(p, q)| (p - q) * (p - q))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .sum();
                Some(total / g.samples.len() as f64)
            }
            None => None,
        };
        stats.push(MethodStats {
            method: g.method.clone(),
            count: g.samples.len(),
            mean_margin: m.iter().sum::<f64>() / m.len() as f64,
            median_margin: median(&m),
            context_distance,
        });
        for (s, margin) in g.samples.iter().zip(m) {
            let (x, y) = projection.project(&s.x);
            points.push(BoundaryPoint {
                x,
                y,
                method: g.method.clone(),
                label: s.y,
                margin,
            });
        }
    }
    Ok(BoundaryReport {
        stats,
        points,
        projection,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryArgs {
    pub per_method: usize,
    pub r: f64,
    pub w: f64,
    pub seed: u64,
}

impl Default for BoundaryArgs {
    fn default() -> Self {
        Self {
            per_method: 500,
            r: 0.8,
            w: crate::augment::DEFAULT_GUIDANCE,
            seed: 0,
        }
    }
}

const CHUNK: usize = 50;

/// Builds the `real`, `genie` and `condsample` groups. Sample `i` targets class
/// `i mod C`; GeNIe draws its source from another class, and the conditional
/// sample at the same index is paired with that same source so context
/// distances compare like with like.
pub fn boundary_groups(
    dataset: &Dataset,
    denoiser: &Denoiser,
    args: &BoundaryArgs,
) -> Result<Vec<MethodSamples>> {
    let n_classes = dataset.n_classes();
    if n_classes < 2 {
        return Err(Error::invalid("boundary analysis needs at least 2 classes"));
    }
    let by_class = dataset.class_indices();
    let root = RngStream::new(args.seed, 0).substream("boundary", 0);
    let mut plan = root.substream("plan", 0);
    let mut real = Vec::with_capacity(args.per_method);
    let mut sources = Vec::with_capacity(args.per_method);
    let mut targets = Vec::with_capacity(args.per_method);
    for i in 0..args.per_method {
        let target = i % n_classes;
        let own = &by_class[target];
        real.push(dataset.samples[own[plan.below(own.len())]].clone());
        let mut source_class = plan.below(n_classes - 1);
        if source_class >= target {
            source_class += 1;
        }
        let pool = &by_class[source_class];
        sources.push(&dataset.samples[pool[plan.below(pool.len())]]);
        targets.push(target);
    }
    let schedule = denoiser.schedule();
    let chunks: Vec<usize> = (0..args.per_method.div_ceil(CHUNK)).collect();
    let generated = chunks
        .par_iter()
        .map(|&c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(args.per_method);
            let mut g_rngs: Vec<RngStream> = range
                .clone()
                .map(|i| root.substream("genie", i as u64))
                .collect();
            let mut c_rngs: Vec<RngStream> = range
                .clone()
                .map(|i| root.substream("condsample", i as u64))
                .collect();
            let genie = genie_batch(
                &sources[range.clone()],
                &targets[range.clone()],
                args.r,
                denoiser,
                schedule,
                &mut g_rngs,
                args.w,
            )?;
            let cond = condsample_batch(&targets[range], denoiser, schedule, &mut c_rngs, args.w)?;
            Ok((genie, cond))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut genie, mut cond) = (Vec::new(), Vec::new());
    for (g, c) in generated {
        genie.extend(g);
        cond.extend(c);
    }
    let source_x: Vec<Vec<f64>> = sources.iter().map(|s| s.x.clone()).collect();
    Ok(vec![
        MethodSamples {
            method: "real".into(),
            samples: real,
            sources: None,
        },
        MethodSamples {
            method: "genie".into(),
            samples: genie,
            sources: Some(source_x.clone()),
        },
        MethodSamples {
            method: "condsample".into(),
            samples: cond,
            sources: Some(source_x),
        },
    ])
}
