//! Classifier-free guidance and reverse-process bookkeeping.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use genie_core::diffusion::{
    cond_sample, predict_eps, reverse_from, train_denoiser, Condition, Denoiser, DenoiserArch,
    EpsModel, ScheduleConfig, TrainConfig,
};
use genie_core::{LabeledSample, RngStream};
use ndarray::{Array2, ArrayView2};

/// Counts rows passed to the wrapped model.
struct Counting<'a> {
    inner: &'a Denoiser,
    rows: AtomicUsize,
}

impl EpsModel for Counting<'_> {
    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn total_steps(&self) -> usize {
        self.inner.total_steps()
    }

    fn eps_batch(&self, x_t: ArrayView2<f64>, t: usize, conds: &[Condition]) -> Array2<f64> {
        self.rows.fetch_add(x_t.nrows(), Ordering::Relaxed);
        self.inner.eps_batch(x_t, t, conds)
    }
}

fn raw_eps(model: &Denoiser, x: &[f64], t: usize, cond: Condition) -> Vec<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).unwrap();
    model
        .eps_batch(view, t, &[cond])
        .into_raw_vec_and_offset()
        .0
}

#[test]
fn guidance_combines_two_raw_passes() {
    let (model, _) = common::quick_denoiser(&common::tight_config(), 300, 0.2);
    let mut rng = RngStream::new(5, 0);
    for t in [1, 250, 700, 1000] {
        let x = rng.gaussian(4).unwrap();
        let cond = raw_eps(&model, &x, t, Condition::Class(2));
        let uncond = raw_eps(&model, &x, t, Condition::Null);
        assert_ne!(cond, uncond);

        assert_eq!(
            predict_eps(&model, &x, t, Condition::Class(2), 0.0).unwrap(),
            cond
        );
        for w in [0.0, 1.0, 3.5] {
            assert_eq!(
                predict_eps(&model, &x, t, Condition::Null, w).unwrap(),
                uncond
            );
        }
        let guided = predict_eps(&model, &x, t, Condition::Class(2), 1.0).unwrap();
        for k in 0..4 {
            let expected = 2.0 * cond[k] - uncond[k];
            assert!((guided[k] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }
    assert!(predict_eps(&model, &[0.0; 4], 0, Condition::Null, 0.0).is_err());
    assert!(predict_eps(&model, &[0.0; 4], 1001, Condition::Null, 0.0).is_err());
}

#[test]
fn reverse_process_counts_model_evaluations() {
    let (model, _) = common::quick_denoiser(&common::tight_config(), 50, 0.1);
    let schedule = model.schedule().clone();
    for (n, w, expected) in [(0, 0.0, 0), (37, 0.0, 37), (37, 2.0, 74), (1000, 1.0, 2000)] {
        let counting = Counting {
            inner: &model,
            rows: AtomicUsize::new(0),
        };
        let mut rng = RngStream::new(1, 0);
        let x = [0.3, -0.2, 1.0, 0.5];
        let out = reverse_from(
            &x,
            n,
            Condition::Class(1),
            &counting,
            &schedule,
            &mut rng,
            w,
        )
        .unwrap();
        assert_eq!(
            counting.rows.load(Ordering::Relaxed),
            expected,
            "n={n} w={w}"
        );
        if n == 0 {
            assert_eq!(out, x.to_vec());
        }
    }
}

#[test]
fn cond_sample_is_reverse_from_a_gaussian_draw() {
    let (model, _) = common::quick_denoiser(&common::tight_config(), 50, 0.1);
    let schedule = model.schedule().clone();
    let mut a = RngStream::new(9, 4);
    let sample = cond_sample(&model, 3, &schedule, &mut a, 0.5).unwrap();
    let mut b = RngStream::new(9, 4);
    let x_t = b.gaussian(4).unwrap();
    let manual = reverse_from(
        &x_t,
        1000,
        Condition::Class(3),
        &model,
        &schedule,
        &mut b,
        0.5,
    )
    .unwrap();
    assert_eq!(sample, manual);
    let other = cond_sample(&model, 3, &schedule, &mut RngStream::new(9, 5), 0.5).unwrap();
    assert_ne!(sample, other);
}

#[test]
fn full_dropout_collapses_conditioning() {
    let (model, _) = common::quick_denoiser(&common::tight_config(), 200, 1.0);
    let mut rng = RngStream::new(2, 0);
    let mut worst: f64 = 0.0;
    for t in [1, 10, 400, 999] {
        let x = rng.gaussian(4).unwrap();
        let uncond = raw_eps(&model, &x, t, Condition::Null);
        for c in 0..4 {
            let cond = raw_eps(&model, &x, t, Condition::Class(c));
            for (a, b) in cond.iter().zip(&uncond) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-9, "max |cond - uncond| = {worst:e}");
}

#[test]
fn single_point_data_is_recovered_from_pure_noise() {
    let target = [2.0, 3.0];
    let data: Vec<LabeledSample> = (0..64)
        .map(|_| LabeledSample::real(target.to_vec(), 0))
        .collect();
    let schedule = ScheduleConfig::default().build().unwrap();
    let (model, _) = train_denoiser(
        &data,
        1,
        &schedule,
        &DenoiserArch::default(),
        &TrainConfig {
            steps: 3000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let root = RngStream::new(4, 0);
    let mut mean = [0.0; 2];
    const N: usize = 500;
    for i in 0..N {
        let x = cond_sample(
            &model,
            0,
            &schedule,
            &mut root.substream("draw", i as u64),
            0.0,
        )
        .unwrap();
        mean[0] += x[0] / N as f64;
        mean[1] += x[1] / N as f64;
    }
    for k in 0..2 {
        assert!((mean[k] - target[k]).abs() < 0.2, "mean {mean:?}");
    }
}
