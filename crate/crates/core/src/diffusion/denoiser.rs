//! Class-conditional epsilon-prediction network and its training loop.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, Net};
use crate::rng::RngStream;
use crate::sample::LabeledSample;

/// Conditioning signal: a class label or the null (unconditional) token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Class(usize),
    Null,
}

/// Anything that predicts the noise in a batch of `x_t` rows.
pub trait EpsModel: Sync {
    fn data_dim(&self) -> usize;
    fn total_steps(&self) -> usize;
    fn eps_batch(&self, x_t: ArrayView2<f64>, t: usize, conds: &[Condition]) -> Array2<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserArch {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub time_embed_dim: usize,
    pub class_embed_dim: usize,
    /// Optional superclass per class; adds a second, shared embedding to the
    /// class condition ("a <class>, a type of <superclass>").
    pub superclass_of: Option<Vec<usize>>,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 128,
            time_embed_dim: 16,
            class_embed_dim: 16,
            superclass_of: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub cfg_dropout_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 6000,
            batch_size: 128,
            lr: 2e-3,
            cfg_dropout_prob: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample squared error of every optimizer step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Trailing moving average with the given window.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let mut out = Vec::with_capacity(self.losses.len());
        let mut acc = 0.0;
        for (i, &l) in self.losses.iter().enumerate() {
            acc += l;
            if i >= window {
                acc -= self.losses[i - window];
            }
            out.push(acc / (i + 1).min(window) as f64);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Superclasses {
    pub assignment: Vec<usize>,
    pub embedding: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub(crate) net: Net,
    pub(crate) schedule: NoiseSchedule,
    pub(crate) data_dim: usize,
    pub(crate) n_classes: usize,
    pub(crate) time_embed_dim: usize,
    pub(crate) class_embed_dim: usize,
    /// `(n_classes + 1, class_embed_dim)`; the last row is the null condition.
    pub(crate) class_embedding: Array2<f64>,
    pub(crate) superclasses: Option<Superclasses>,
    /// Per-coordinate second moment of the training data, used to scale `x_t` to
    /// unit variance before it enters the net.
    pub(crate) data_second_moment: Vec<f64>,
    time_table: Array2<f64>,
}

fn sinusoidal_table(total_steps: usize, dim: usize) -> Array2<f64> {
    let half = dim / 2;
    Array2::from_shape_fn((total_steps + 1, dim), |(t, k)| {
        if k >= 2 * half {
            return 0.0;
        }
        let j = k % half;
        let freq = (-(10_000f64.ln()) * j as f64 / half.max(1) as f64).exp();
        let angle = t as f64 * freq;
        if k < half {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl Denoiser {
    pub fn new(
        arch: &DenoiserArch,
        schedule: NoiseSchedule,
        data_dim: usize,
        n_classes: usize,
        data_second_moment: Vec<f64>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if data_dim == 0 || n_classes == 0 {
            return Err(Error::invalid(
                "denoiser needs data_dim > 0 and n_classes > 0",
            ));
        }
        if data_second_moment.len() != data_dim {
            return Err(Error::DimensionMismatch {
                expected: data_dim,
                got: data_second_moment.len(),
            });
        }
        let superclasses = match &arch.superclass_of {
            None => None,
            Some(assignment) => {
                if assignment.len() != n_classes {
                    return Err(Error::DimensionMismatch {
                        expected: n_classes,
                        got: assignment.len(),
                    });
                }
                let n_super = assignment.iter().max().map_or(0, |m| m + 1);
                Some(Superclasses {
                    assignment: assignment.clone(),
                    embedding: Array2::zeros((n_super, arch.class_embed_dim)),
                })
            }
        };
        let input_dim = data_dim + arch.time_embed_dim + arch.class_embed_dim;
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(arch.hidden_width, arch.hidden_layers));
        dims.push(data_dim);
        let mut net = Net::mlp(&dims, Activation::Silu, rng)?;
        net.zero_output_layer();
        Ok(Self::assemble(
            net,
            schedule,
            data_dim,
            n_classes,
            arch.time_embed_dim,
            arch.class_embed_dim,
            Array2::zeros((n_classes + 1, arch.class_embed_dim)),
            superclasses,
            data_second_moment,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        net: Net,
        schedule: NoiseSchedule,
        data_dim: usize,
        n_classes: usize,
        time_embed_dim: usize,
        class_embed_dim: usize,
        class_embedding: Array2<f64>,
        superclasses: Option<Superclasses>,
        data_second_moment: Vec<f64>,
    ) -> Self {
        let time_table = sinusoidal_table(schedule.total_steps, time_embed_dim);
        Self {
            net,
            schedule,
            data_dim,
            n_classes,
            time_embed_dim,
            class_embed_dim,
            class_embedding,
            superclasses,
            data_second_moment,
            time_table,
        }
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_embedding(&self) -> &Array2<f64> {
        &self.class_embedding
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite() && self.class_embedding.iter().all(|v| v.is_finite())
    }

    fn input_scale(&self, t: usize) -> Vec<f64> {
        let ab = self.schedule.alpha_bar(t);
        self.data_second_moment
            .iter()
            .map(|&m2| 1.0 / (ab * m2 + 1.0 - ab).sqrt())
            .collect()
    }

    fn write_condition(&self, row: &mut ndarray::ArrayViewMut1<f64>, cond: Condition) {
        let null = self.n_classes;
        match cond {
            Condition::Null => row.assign(&self.class_embedding.row(null)),
            Condition::Class(c) => {
                assert!(c < self.n_classes, "class {c} out of range");
                row.assign(&self.class_embedding.row(c));
                if let Some(sup) = &self.superclasses {
                    *row += &sup.embedding.row(sup.assignment[c]);
                }
            }
        }
    }

    /// Network input rows for a batch sharing one time step.
    fn build_inputs(
        &self,
        x_t: ArrayView2<f64>,
        steps: &[usize],
        conds: &[Condition],
    ) -> Array2<f64> {
        let d = self.data_dim;
        let te = self.time_embed_dim;
        let mut input = Array2::zeros((x_t.nrows(), self.net.input_dim()));
        for (b, mut row) in input.rows_mut().into_iter().enumerate() {
            let t = steps[b];
            let scale = self.input_scale(t);
            for k in 0..d {
                row[k] = x_t[[b, k]] * scale[k];
            }
            row.slice_mut(s![d..d + te]).assign(&self.time_table.row(t));
            self.write_condition(&mut row.slice_mut(s![d + te..]), conds[b]);
        }
        input
    }

    fn condition_of(&self, y: usize, drop: bool) -> Condition {
        if drop {
            Condition::Null
        } else {
            Condition::Class(y)
        }
    }

    /// Copies the null row over every class that never appeared with its label
    /// during training, so an untrained condition means "unconditional".
    fn collapse_unseen(&mut self, seen: &[bool]) {
        let null = self.class_embedding.row(self.n_classes).to_owned();
        for (c, &was_seen) in seen.iter().enumerate() {
            if !was_seen {
                self.class_embedding.row_mut(c).assign(&null);
                if let Some(sup) = &self.superclasses {
                    let shift = sup.embedding.row(sup.assignment[c]).to_owned();
                    let mut row = self.class_embedding.row_mut(c);
                    row -= &shift;
                }
            }
        }
    }
}

impl EpsModel for Denoiser {
    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn total_steps(&self) -> usize {
        self.schedule.total_steps
    }

    fn eps_batch(&self, x_t: ArrayView2<f64>, t: usize, conds: &[Condition]) -> Array2<f64> {
        assert_eq!(x_t.nrows(), conds.len());
        let steps = vec![t; conds.len()];
        let input = self.build_inputs(x_t, &steps, conds);
        self.net
            .forward_batch(input.view())
            .expect("input width fixed by construction")
    }
}

/// Per-coordinate mean of `x^2`.
fn second_moment(data: &[LabeledSample], dim: usize) -> Vec<f64> {
    let mut m2 = vec![0.0; dim];
    for s in data {
        for (acc, v) in m2.iter_mut().zip(&s.x) {
            *acc += v * v;
        }
    }
    m2.iter_mut().for_each(|v| *v /= data.len() as f64);
    m2
}

/// Trains an epsilon-prediction denoiser with classifier-free guidance dropout.
///
/// Each step draws a minibatch with replacement, a uniform step `t` in `1..=T`
/// per row, and replaces the class by the null token with probability
/// `cfg_dropout_prob`. The loss is the per-sample squared error `|eps - eps_hat|^2`
/// averaged over the batch.
pub fn train_denoiser(
    data: &[LabeledSample],
    n_classes: usize,
    schedule: &NoiseSchedule,
    arch: &DenoiserArch,
    cfg: &TrainConfig,
) -> Result<(Denoiser, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if !(0.0..=1.0).contains(&cfg.cfg_dropout_prob) {
        return Err(Error::invalid("cfg_dropout_prob must lie in [0, 1]"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let dim = data[0].x.len();
    if let Some(bad) = data.iter().find(|s| s.x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.x.len(),
        });
    }
    if let Some(bad) = data.iter().find(|s| s.y >= n_classes) {
        return Err(Error::invalid(format!(
            "label {} outside [0, {n_classes})",
            bad.y
        )));
    }

    let root = RngStream::new(cfg.seed, 0);
    let mut init_rng = root.substream("denoiser-init", 0);
    let mut rng = root.substream("denoiser-batches", 0);
    let mut model = Denoiser::new(
        arch,
        schedule.clone(),
        dim,
        n_classes,
        second_moment(data, dim),
        &mut init_rng,
    )?;

    let mut sizes: Vec<usize> = model
        .net
        .parameter_shapes()
        .iter()
        .map(|s| s.iter().product())
        .collect();
    sizes.push(model.class_embedding.len());
    if let Some(sup) = &model.superclasses {
        sizes.push(sup.embedding.len());
    }
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &sizes,
    );

    let batch = cfg.batch_size;
    let (d, te) = (dim, arch.time_embed_dim);
    let mut seen = vec![false; n_classes];
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut x_t = Array2::zeros((batch, dim));
    let mut eps = Array2::zeros((batch, dim));
    let mut steps = vec![0usize; batch];
    let mut conds = vec![Condition::Null; batch];

    for step in 0..cfg.steps {
        for b in 0..batch {
            let sample = &data[rng.below(data.len())];
            let t = 1 + rng.below(schedule.total_steps);
            let ab = schedule.alpha_bar(t);
            let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
            for k in 0..dim {
                let e = rng.normal();
                eps[[b, k]] = e;
                x_t[[b, k]] = sa * sample.x[k] + sn * e;
            }
            let drop = rng.uniform() < cfg.cfg_dropout_prob;
            if !drop {
                seen[sample.y] = true;
            }
            steps[b] = t;
            conds[b] = model.condition_of(sample.y, drop);
        }

        let input = model.build_inputs(x_t.view(), &steps, &conds);
        let (pred, tape) = model.net.forward_with_tape(input.view())?;
        let diff = &pred - &eps;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / batch as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        losses.push(loss);

        let upstream = diff * (2.0 / batch as f64);
        let (grads, input_grad) = model.net.backward(&tape, upstream.view())?;

        let mut emb_grad = Array2::<f64>::zeros(model.class_embedding.raw_dim());
        let mut sup_grad = model
            .superclasses
            .as_ref()
            .map(|s| Array2::<f64>::zeros(s.embedding.raw_dim()));
        for (b, cond) in conds.iter().enumerate() {
            let g = input_grad.slice(s![b, d + te..]);
            match *cond {
                Condition::Null => {
                    let mut row = emb_grad.row_mut(n_classes);
                    row += &g;
                }
                Condition::Class(c) => {
                    let mut row = emb_grad.row_mut(c);
                    row += &g;
                    if let (Some(sg), Some(sup)) = (sup_grad.as_mut(), model.superclasses.as_ref())
                    {
                        let mut srow = sg.row_mut(sup.assignment[c]);
                        srow += &g;
                    }
                }
            }
        }

        let mut grad_slices = grads.slices();
        grad_slices.push(emb_grad.as_slice().expect("standard layout"));
        if let Some(sg) = &sup_grad {
            grad_slices.push(sg.as_slice().expect("standard layout"));
        }
        let mut params = model.net.parameters_mut();
        params.push(
            model
                .class_embedding
                .as_slice_mut()
                .expect("standard layout"),
        );
        if let Some(sup) = model.superclasses.as_mut() {
            params.push(sup.embedding.as_slice_mut().expect("standard layout"));
        }
        adam.step(&mut params, &grad_slices).map_err(|e| match e {
            Error::NonFinite(_) => Error::Divergence { step, loss },
            other => other,
        })?;
    }

    model.collapse_unseen(&seen);
    if !model.is_finite() {
        return Err(Error::NonFinite("denoiser parameters"));
    }
    Ok((model, TrainReport { losses }))
}
