//! The oracle: a small MLP trained on abundant real data, used only to judge
//! what class a generated sample actually looks like.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::data::{build_synthetic, SyntheticTaskConfig};
use crate::error::{Error, Result};
use crate::eval::logreg::{feature_matrix, target_matrix};
use crate::eval::Classifier;
use crate::nn::{softmax, Activation, Net};
use crate::rng::RngStream;
use crate::sample::LabeledSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub min_accuracy: f64,
    pub min_per_class: usize,
    /// Samples per class in the training and held-out draws built by
    /// [`train_oracle_for`].
    pub train_per_class: usize,
    pub heldout_per_class: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            steps: 1500,
            lr: 1e-2,
            min_accuracy: 0.97,
            min_per_class: 200,
            train_per_class: 400,
            heldout_per_class: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleModel {
    net: Net,
    mean: Vec<f64>,
    scale: Vec<f64>,
    n_classes: usize,
    pub heldout_accuracy: f64,
}

impl OracleModel {
    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for mut row in z.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        z
    }
}

impl Classifier for OracleModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let z = self.standardize(x);
        let mut logits = self
            .net
            .forward_batch(z.view())
            .expect("oracle input width");
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        logits
    }
}

/// Full-batch Adam on cross-entropy over standardized inputs. The output layer
/// starts at zero, which makes training covariant under class relabeling.
pub fn train_oracle(
    train: &[LabeledSample],
    heldout: &[LabeledSample],
    n_classes: usize,
    cfg: &OracleConfig,
) -> Result<OracleModel> {
    let mut counts = vec![0usize; n_classes];
    for s in train {
        if s.y >= n_classes {
            return Err(Error::invalid(format!(
                "label {} outside [0, {n_classes})",
                s.y
            )));
        }
        counts[s.y] += 1;
    }
    if let Some((c, &n)) = counts
        .iter()
        .enumerate()
        .find(|(_, &n)| n < cfg.min_per_class)
    {
        return Err(Error::InsufficientSamples(format!(
            "oracle needs {} samples per class, class {c} has {n}",
            cfg.min_per_class
        )));
    }
    if heldout.is_empty() {
        return Err(Error::Empty("oracle held-out set"));
    }
    let x = feature_matrix(train)?;
    let targets = target_matrix(train, n_classes)?;
    let dim = x.ncols();
    let n = x.nrows() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| x.column(k).sum() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|k| {
            let var = x
                .column(k)
                .iter()
                .map(|v| (v - mean[k]).powi(2))
                .sum::<f64>()
                / n;
            if var > 1e-12 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();

    let mut rng = RngStream::new(cfg.seed, 0).substream("oracle-init", 0);
    let mut net = Net::mlp(&[dim, cfg.hidden, n_classes], Activation::Silu, &mut rng)?;
    net.zero_output_layer();
    let mut model = OracleModel {
        net,
        mean,
        scale,
        n_classes,
        heldout_accuracy: 0.0,
    };
    let z = model.standardize(x.view());
    let sizes: Vec<usize> = model
        .net
        .parameter_shapes()
        .iter()
        .map(|s| s.iter().product())
        .collect();
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &sizes,
    );
    for step in 0..cfg.steps {
        let (logits, tape) = model.net.forward_with_tape(z.view())?;
        let mut residual = logits;
        let mut loss = 0.0;
        for (mut row, t) in residual.rows_mut().into_iter().zip(targets.rows()) {
            let p = softmax(row.view());
            loss -= t
                .iter()
                .zip(&p)
                .map(|(&tk, &pk)| tk * pk.max(1e-300).ln())
                .sum::<f64>();
            for ((r, pk), tk) in row.iter_mut().zip(&p).zip(t) {
                *r = (pk - tk) / n;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        let (grads, _) = model.net.backward(&tape, residual.view())?;
        adam.step(&mut model.net.parameters_mut(), &grads.slices())?;
    }

    let hx = feature_matrix(heldout)?;
    let predictions = model.predict_batch(hx.view());
    let correct = predictions
        .iter()
        .zip(heldout)
        .filter(|(&p, s)| p == s.y)
        .count();
    model.heldout_accuracy = correct as f64 / heldout.len() as f64;
    if model.heldout_accuracy < cfg.min_accuracy {
        return Err(Error::OracleBelowThreshold {
            accuracy: model.heldout_accuracy,
            required: cfg.min_accuracy,
        });
    }
    Ok(model)
}

/// Trains the oracle on fresh, abundant draws of the given task (seeds derived
/// from the task seed, disjoint from the task's own samples).
pub fn train_oracle_for(task: &SyntheticTaskConfig, cfg: &OracleConfig) -> Result<OracleModel> {
    let root = RngStream::new(task.seed, 0);
    let draw = |label: &str, per_class: usize| {
        build_synthetic(&SyntheticTaskConfig {
            samples_per_class: per_class,
            seed: root.substream(label, 0).next_u64(),
            ..task.clone()
        })
    };
    let train = draw("oracle-train", cfg.train_per_class)?;
    let heldout = draw("oracle-heldout", cfg.heldout_per_class)?;
    train_oracle(&train.samples, &heldout.samples, task.n_classes, cfg)
}
