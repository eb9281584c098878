//! Diffusion-based operators: GeNIe, Img2Img and conditional sampling.

use ndarray::Array2;

use crate::diffusion::{
    cond_sample_batch, forward_noise_batch, noising_step_count, reverse_from_batch, Condition,
    EpsModel, NoiseSchedule,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::{LabeledSample, Provenance};

/// Noise `x0` rows to step `floor(r T)` and denoise them under `targets`.
/// Row `i` uses `rngs[i]` for both the forward noise and every reverse step.
pub fn noise_and_denoise<M: EpsModel + ?Sized>(
    x0: &Array2<f64>,
    targets: &[usize],
    r: f64,
    model: &M,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Array2<f64>> {
    let n = noising_step_count(r, schedule.total_steps)?;
    let x_n = forward_noise_batch(x0.view(), n, schedule, rngs)?;
    let conds: Vec<Condition> = targets.iter().map(|&c| Condition::Class(c)).collect();
    reverse_from_batch(x_n, n, &conds, model, schedule, rngs, w)
}

fn rows(samples: &[&LabeledSample]) -> Result<Array2<f64>> {
    let dim = samples.first().map_or(0, |s| s.x.len());
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

/// Batched GeNIe: each source is noised to `floor(r T)` and denoised toward its
/// target class. Labels, targets and sources all live in the model's class space.
pub fn genie_batch<M: EpsModel + ?Sized>(
    sources: &[&LabeledSample],
    targets: &[usize],
    r: f64,
    model: &M,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Vec<LabeledSample>> {
    if sources.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: sources.len(),
            got: targets.len(),
        });
    }
    if let Some((s, _)) = sources.iter().zip(targets).find(|(s, &t)| s.y == t) {
        return Err(Error::invalid(format!(
            "genie target equals the source class {}; that is img2img",
            s.y
        )));
    }
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let x = noise_and_denoise(&rows(sources)?, targets, r, model, schedule, rngs, w)?;
    Ok(x.rows()
        .into_iter()
        .zip(sources.iter().zip(targets))
        .map(|(row, (src, &target))| LabeledSample {
            x: row.to_vec(),
            y: target,
            provenance: Provenance::Genie,
            source_class: Some(src.y),
            r_used: Some(r),
            mix_weight: None,
        })
        .collect())
}

pub fn genie<M: EpsModel + ?Sized>(
    source: &LabeledSample,
    target: usize,
    r: f64,
    model: &M,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
    w: f64,
) -> Result<LabeledSample> {
    let mut out = genie_batch(
        &[source],
        &[target],
        r,
        model,
        schedule,
        std::slice::from_mut(rng),
        w,
    )?;
    Ok(out.remove(0))
}

/// Batched Img2Img: partial noise and denoise under each sample's own class.
pub fn img2img_batch<M: EpsModel + ?Sized>(
    samples: &[&LabeledSample],
    r: f64,
    model: &M,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Vec<LabeledSample>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let targets: Vec<usize> = samples.iter().map(|s| s.y).collect();
    let x = noise_and_denoise(&rows(samples)?, &targets, r, model, schedule, rngs, w)?;
    Ok(x.rows()
        .into_iter()
        .zip(samples)
        .map(|(row, src)| LabeledSample {
            x: row.to_vec(),
            y: src.y,
            provenance: Provenance::Img2img,
            source_class: Some(src.y),
            r_used: Some(r),
            mix_weight: None,
        })
        .collect())
}

pub fn img2img<M: EpsModel + ?Sized>(
    sample: &LabeledSample,
    r: f64,
    model: &M,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
    w: f64,
) -> Result<LabeledSample> {
    let mut out = img2img_batch(&[sample], r, model, schedule, std::slice::from_mut(rng), w)?;
    Ok(out.remove(0))
}

/// Batched pure conditional sampling, labeled as `condsample`.
pub fn condsample_batch<M: EpsModel + ?Sized>(
    classes: &[usize],
    model: &M,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Vec<LabeledSample>> {
    if classes.is_empty() {
        return Ok(Vec::new());
    }
    let x = cond_sample_batch(model, classes, schedule, rngs, w)?;
    Ok(x.rows()
        .into_iter()
        .zip(classes)
        .map(|(row, &c)| LabeledSample {
            x: row.to_vec(),
            y: c,
            provenance: Provenance::Condsample,
            source_class: None,
            r_used: Some(1.0),
            mix_weight: None,
        })
        .collect())
}
