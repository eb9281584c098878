use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Linear-beta DDPM schedule. Steps are 1-based: `beta(1)..=beta(T)`, and
/// `alpha_bar(0) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub total_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.total_steps, self.beta_min, self.beta_max)
    }
}

impl NoiseSchedule {
    pub fn linear(total_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if total_steps < 2 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        let span = (total_steps - 1) as f64;
        let betas: Vec<f64> = (0..total_steps)
            .map(|i| beta_min + i as f64 / span * (beta_max - beta_min))
            .collect();
        let alpha_bars = betas
            .iter()
            .scan(1.0, |acc, &b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            total_steps,
            beta_min,
            beta_max,
            betas,
            alpha_bars,
        })
    }

    pub fn config(&self) -> ScheduleConfig {
        ScheduleConfig {
            total_steps: self.total_steps,
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Posterior variance of `x_{t-1}` given `x_t` and `x_0`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }
}

/// Number of forward steps for a noise ratio: `floor(r * T)`.
///
/// A slack of 1e-9 absorbs binary representation error of decimal ratios
/// (`0.57 * 100` evaluates to `56.99999999999999`).
pub fn noising_step_count(r: f64, total_steps: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("noise ratio {r} outside [0, 1]")));
    }
    let n = (r * total_steps as f64 + 1e-9).floor() as usize;
    Ok(n.min(total_steps))
}

/// Closed-form jump to step `n`: `sqrt(ab_n) x0 + sqrt(1 - ab_n) eps`. Draws nothing
/// when `n = 0`.
pub fn forward_noise(
    x0: &[f64],
    n: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if n > schedule.total_steps {
        return Err(Error::invalid(format!(
            "step {n} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    if n == 0 {
        return Ok(x0.to_vec());
    }
    let ab = schedule.alpha_bar(n);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0
        .iter()
        .map(|&v| signal * v + noise * rng.normal())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_endpoints() {
        let s = ScheduleConfig::default().build().unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - 1e-4);
        assert!(s.alpha_bar(1000) < 5e-5, "{}", s.alpha_bar(1000));
        assert_eq!(s.beta(1000), 0.02);
    }

    #[test]
    fn two_step_schedule() {
        let s = NoiseSchedule::linear(2, 0.1, 0.3).unwrap();
        assert_eq!(s.alpha_bar(2), (1.0 - 0.1) * (1.0 - 0.3));
    }

    #[test]
    fn invalid_bounds() {
        assert!(NoiseSchedule::linear(1, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.03, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn schedule_is_monotone() {
        let s = ScheduleConfig::default().build().unwrap();
        for t in 1..s.total_steps {
            assert!(s.beta(t) <= s.beta(t + 1));
            assert!(s.alpha_bar(t + 1) < s.alpha_bar(t));
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
        }
    }

    #[test]
    fn step_counts() {
        assert_eq!(noising_step_count(0.8, 1000).unwrap(), 800);
        assert_eq!(noising_step_count(0.0, 1000).unwrap(), 0);
        assert_eq!(noising_step_count(0.999, 1000).unwrap(), 999);
        assert_eq!(noising_step_count(1.0, 1000).unwrap(), 1000);
        assert_eq!(noising_step_count(0.57, 100).unwrap(), 57);
        assert!(noising_step_count(1.01, 1000).is_err());
        assert!(noising_step_count(-0.1, 1000).is_err());
    }

    #[test]
    fn zero_steps_is_identity() {
        let s = ScheduleConfig::default().build().unwrap();
        let mut rng = RngStream::new(0, 0);
        let x0 = [1.25, -3.5];
        assert_eq!(forward_noise(&x0, 0, &s, &mut rng).unwrap(), x0.to_vec());
        assert!(forward_noise(&x0, 1001, &s, &mut rng).is_err());
    }
}
