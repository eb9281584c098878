//! Guided noise prediction and ancestral DDPM sampling.

use ndarray::{Array2, ArrayView2};

use crate::diffusion::denoiser::{Condition, EpsModel};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Classifier-free guidance over a batch: `(1 + w) eps_cond - w eps_uncond`.
///
/// Null-conditioned rows, and every row when `w == 0`, cost one model row;
/// class-conditioned rows cost two when `w != 0`.
pub fn guided_eps_batch<M: EpsModel + ?Sized>(
    model: &M,
    x_t: ArrayView2<f64>,
    t: usize,
    conds: &[Condition],
    w: f64,
) -> Array2<f64> {
    let guided: Vec<usize> = if w == 0.0 {
        Vec::new()
    } else {
        (0..conds.len())
            .filter(|&i| conds[i] != Condition::Null)
            .collect()
    };
    if guided.is_empty() {
        return model.eps_batch(x_t, t, conds);
    }
    let rows = conds.len() + guided.len();
    let mut stacked = Array2::zeros((rows, x_t.ncols()));
    stacked
        .slice_mut(ndarray::s![..conds.len(), ..])
        .assign(&x_t);
    let mut all_conds = conds.to_vec();
    for (j, &i) in guided.iter().enumerate() {
        stacked.row_mut(conds.len() + j).assign(&x_t.row(i));
        all_conds.push(Condition::Null);
    }
    let eps = model.eps_batch(stacked.view(), t, &all_conds);
    let mut out = eps.slice(ndarray::s![..conds.len(), ..]).to_owned();
    for (j, &i) in guided.iter().enumerate() {
        let uncond = eps.row(conds.len() + j);
        for (o, &u) in out.row_mut(i).iter_mut().zip(uncond) {
            *o = (1.0 + w) * *o - w * u;
        }
    }
    out
}

pub fn predict_eps<M: EpsModel + ?Sized>(
    model: &M,
    x_t: &[f64],
    t: usize,
    cond: Condition,
    w: f64,
) -> Result<Vec<f64>> {
    check_step(t, model.total_steps())?;
    check_dim(x_t.len(), model.data_dim())?;
    let view = ArrayView2::from_shape((1, x_t.len()), x_t).expect("row view");
    Ok(guided_eps_batch(model, view, t, &[cond], w)
        .into_raw_vec_and_offset()
        .0)
}

fn check_step(t: usize, total: usize) -> Result<()> {
    if t == 0 || t > total {
        return Err(Error::invalid(format!("step {t} outside 1..={total}")));
    }
    Ok(())
}

fn check_dim(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Closed-form forward noising of every row to step `n`, each row drawing from
/// its own stream.
pub fn forward_noise_batch(
    x0: ArrayView2<f64>,
    n: usize,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
) -> Result<Array2<f64>> {
    if rngs.len() != x0.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x0.nrows(),
            got: rngs.len(),
        });
    }
    let mut out = Array2::zeros(x0.raw_dim());
    for ((src, mut dst), rng) in x0
        .rows()
        .into_iter()
        .zip(out.rows_mut())
        .zip(rngs.iter_mut())
    {
        let row = super::forward_noise(src.as_slice().unwrap_or(&src.to_vec()), n, schedule, rng)?;
        dst.assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(out)
}

/// Ancestral DDPM sampling from step `n` down to 0 for a batch of rows.
///
/// `x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t) + sigma_t z`
/// with `sigma_t^2` the posterior variance and `z = 0` on the final step. Row `i`
/// draws its noise from `rngs[i]` only, so results do not depend on batch
/// composition beyond floating-point evaluation order.
pub fn reverse_from_batch<M: EpsModel + ?Sized>(
    x_n: Array2<f64>,
    n: usize,
    conds: &[Condition],
    model: &M,
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Array2<f64>> {
    if n > schedule.total_steps {
        return Err(Error::invalid(format!(
            "start step {n} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    if schedule.total_steps != model.total_steps() {
        return Err(Error::invalid("model and schedule disagree on T"));
    }
    check_dim(x_n.ncols(), model.data_dim())?;
    if conds.len() != x_n.nrows() || rngs.len() != x_n.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_n.nrows(),
            got: conds.len().min(rngs.len()),
        });
    }
    let mut x = x_n;
    for t in (1..=n).rev() {
        let eps = guided_eps_batch(model, x.view(), t, conds, w);
        let ab = schedule.alpha_bar(t);
        let coef = schedule.beta(t) / (1.0 - ab).sqrt();
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        let sigma = if t > 1 {
            schedule.posterior_variance(t).sqrt()
        } else {
            0.0
        };
        for ((mut row, e), rng) in x
            .rows_mut()
            .into_iter()
            .zip(eps.rows())
            .zip(rngs.iter_mut())
        {
            for (v, &ev) in row.iter_mut().zip(e) {
                *v = (*v - coef * ev) * inv_sqrt_alpha;
            }
            if t > 1 {
                for v in row.iter_mut() {
                    *v += sigma * rng.normal();
                }
            }
        }
    }
    Ok(x)
}

pub fn reverse_from<M: EpsModel + ?Sized>(
    x_n: &[f64],
    n: usize,
    cond: Condition,
    model: &M,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
    w: f64,
) -> Result<Vec<f64>> {
    let x = Array2::from_shape_vec((1, x_n.len()), x_n.to_vec()).expect("row");
    let out = reverse_from_batch(x, n, &[cond], model, schedule, std::slice::from_mut(rng), w)?;
    Ok(out.into_raw_vec_and_offset().0)
}

/// Pure conditional sampling: a standard normal draw taken through all `T` steps.
pub fn cond_sample<M: EpsModel + ?Sized>(
    model: &M,
    class: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
    w: f64,
) -> Result<Vec<f64>> {
    let x_t = rng.gaussian(model.data_dim())?;
    reverse_from(
        &x_t,
        schedule.total_steps,
        Condition::Class(class),
        model,
        schedule,
        rng,
        w,
    )
}

pub fn cond_sample_batch<M: EpsModel + ?Sized>(
    model: &M,
    classes: &[usize],
    schedule: &NoiseSchedule,
    rngs: &mut [RngStream],
    w: f64,
) -> Result<Array2<f64>> {
    if classes.len() != rngs.len() {
        return Err(Error::DimensionMismatch {
            expected: classes.len(),
            got: rngs.len(),
        });
    }
    let dim = model.data_dim();
    let mut x = Array2::zeros((classes.len(), dim));
    for (mut row, rng) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
        for v in row.iter_mut() {
            *v = rng.normal();
        }
    }
    let conds: Vec<Condition> = classes.iter().map(|&c| Condition::Class(c)).collect();
    reverse_from_batch(x, schedule.total_steps, &conds, model, schedule, rngs, w)
}
