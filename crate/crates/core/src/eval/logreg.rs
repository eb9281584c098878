//! Multinomial logistic regression fitted by full-batch gradient descent with
//! step halving.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Classifier;
use crate::nn::softmax;
use crate::sample::LabeledSample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub steps: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            steps: 500,
            lr: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegHead {
    /// `(n_classes, feature_dim)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub trained_on: usize,
}

impl Classifier for LogRegHead {
    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn predict_proba_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.weights.t());
        logits += &self.bias;
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        logits
    }
}

/// Cross-entropy against soft targets plus `l2 * |W|^2`, and its gradient.
struct Objective<'a> {
    x: ArrayView2<'a, f64>,
    targets: ArrayView2<'a, f64>,
    l2: f64,
}

impl Objective<'_> {
    fn probabilities(&self, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
        let mut logits = self.x.dot(&w.t());
        logits += b;
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        logits
    }

    fn loss(&self, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
        let n = self.x.nrows() as f64;
        let mut logits = self.x.dot(&w.t());
        logits += b;
        let mut ce = 0.0;
        for (row, t) in logits.rows().into_iter().zip(self.targets.rows()) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            ce += row
                .iter()
                .zip(t)
                .map(|(&z, &tk)| tk * (lse - z))
                .sum::<f64>();
        }
        ce / n + self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &Array2<f64>, b: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        let n = self.x.nrows() as f64;
        let residual = self.probabilities(w, b) - self.targets;
        let gw = residual.t().dot(&self.x) / n + w * (2.0 * self.l2);
        let gb = residual.sum_axis(Axis(0)) / n;
        (gw, gb)
    }
}

/// Soft-target rows for a labeled set. Mixed samples split their weight between
/// `y` and `source_class`.
pub fn target_matrix(samples: &[LabeledSample], n_classes: usize) -> Result<Array2<f64>> {
    let mut t = Array2::zeros((samples.len(), n_classes));
    for (i, s) in samples.iter().enumerate() {
        if s.y >= n_classes {
            return Err(Error::invalid(format!(
                "label {} outside [0, {n_classes})",
                s.y
            )));
        }
        match (s.mix_weight, s.source_class) {
            (Some(wgt), Some(other)) if other < n_classes => {
                t[[i, s.y]] += wgt;
                t[[i, other]] += 1.0 - wgt;
            }
            _ => t[[i, s.y]] = 1.0,
        }
    }
    Ok(t)
}

pub fn feature_matrix(samples: &[LabeledSample]) -> Result<Array2<f64>> {
    let dim = samples
        .first()
        .ok_or(Error::Empty("feature matrix"))?
        .x
        .len();
    let mut x = Array2::zeros((samples.len(), dim));
    for (mut row, s) in x.rows_mut().into_iter().zip(samples) {
        if s.x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.x.len(),
            });
        }
        row.assign(&ndarray::ArrayView1::from(&s.x));
    }
    Ok(x)
}

/// Fits a softmax regression head on per-column standardized features. Returns
/// the head and the loss after every accepted step (index 0 is the initial
/// loss). A step that would increase the loss is retried with half the learning
/// rate, so the sequence never increases.
pub fn fit_logreg(
    samples: &[LabeledSample],
    n_classes: usize,
    cfg: &LogRegConfig,
) -> Result<(LogRegHead, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Empty("logistic regression training set"));
    }
    let mut present = vec![false; n_classes];
    for s in samples {
        if s.y < n_classes {
            present[s.y] = true;
        }
    }
    if let Some(c) = present.iter().position(|&p| !p) {
        return Err(Error::MissingClass(c));
    }
    let x = feature_matrix(samples)?;
    let targets = target_matrix(samples, n_classes)?;
    fit_logreg_matrix(x.view(), targets.view(), cfg)
}

pub fn fit_logreg_matrix(
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    cfg: &LogRegConfig,
) -> Result<(LogRegHead, Vec<f64>)> {
    if x.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: targets.nrows(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("logistic regression training set"));
    }
    let n_classes = targets.ncols();
    let (z, mean, scale) = standardize(x);
    let objective = Objective {
        x: z.view(),
        targets,
        l2: cfg.l2,
    };
    let mut w = Array2::zeros((n_classes, x.ncols()));
    let mut b = Array1::zeros(n_classes);
    let mut loss = objective.loss(&w, &b);
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    losses.push(loss);
    let mut lr = cfg.lr;
    'outer: for _ in 0..cfg.steps {
        let (gw, gb) = objective.gradient(&w, &b);
        loop {
            let w_new = &w - &(&gw * lr);
            let b_new = &b - &(&gb * lr);
            let candidate = objective.loss(&w_new, &b_new);
            if candidate <= loss {
                w = w_new;
                b = b_new;
                loss = candidate;
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break 'outer;
            }
        }
        losses.push(loss);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("logistic regression loss"));
    }
    // Fold the standardization back so the head applies to raw vectors.
    for (j, (&m, &sc)) in mean.iter().zip(&scale).enumerate() {
        for k in 0..n_classes {
            w[[k, j]] /= sc;
            b[k] -= w[[k, j]] * m;
        }
    }
    Ok((
        LogRegHead {
            weights: w,
            bias: b,
            trained_on: x.nrows(),
        },
        losses,
    ))
}

/// Per-column z-scores; constant columns keep unit scale.
fn standardize(x: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let mean: Vec<f64> = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let scale: Vec<f64> = x
        .axis_iter(Axis(1))
        .zip(&mean)
        .map(|(col, &m)| {
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut z = x.to_owned();
    for mut row in z.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }
    (z, mean, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_points_put_the_boundary_at_zero() {
        let samples = vec![
            LabeledSample::real(vec![-1.0], 0),
            LabeledSample::real(vec![1.0], 1),
        ];
        let (head, losses) = fit_logreg(&samples, 2, &LogRegConfig::default()).unwrap();
        // boundary where the two logits are equal
        let dw = head.weights[[1, 0]] - head.weights[[0, 0]];
        let db = head.bias[1] - head.bias[0];
        let boundary = -db / dw;
        assert!(boundary.abs() < 0.1, "boundary at {boundary}");
        assert!(losses.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn missing_class_is_an_error() {
        let samples = vec![LabeledSample::real(vec![0.0], 0)];
        assert!(matches!(
            fit_logreg(&samples, 2, &LogRegConfig::default()),
            Err(Error::MissingClass(1))
        ));
    }

    #[test]
    fn soft_targets_split_weight() {
        let mut s = LabeledSample::real(vec![0.0], 0);
        s.mix_weight = Some(0.7);
        s.source_class = Some(2);
        let t = target_matrix(&[s], 3).unwrap();
        assert_eq!(t.row(0).to_vec(), vec![0.7, 0.0, 0.30000000000000004]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let samples = vec![
            LabeledSample::real(vec![-3.0, 40.0], 0),
            LabeledSample::real(vec![2.0, -35.0], 1),
            LabeledSample::real(vec![5.0, 1.0], 2),
        ];
        let (head, losses) = fit_logreg(&samples, 3, &LogRegConfig::default()).unwrap();
        assert!(losses.windows(2).all(|p| p[1] <= p[0]));
        for s in &samples {
            let p = head.predict_proba(&s.x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
