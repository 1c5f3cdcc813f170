use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;

/// Per-step `beta`, `alpha = 1 - beta` and cumulative `alpha_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub beta_min: f64,
    pub beta_max: f64,
}

/// Squared-cosine `alpha_bar` before any clipping.
pub fn cosine_alpha_bar(t: usize, steps: usize) -> f64 {
    let s = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
    (s * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

pub fn make_cosine_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::config(
            "train.diffusion_steps",
            format!("need at least 2 steps, got {steps}"),
        ));
    }
    if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
        return Err(Error::config(
            "train.beta_range",
            format!("need 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]"),
        ));
    }
    let raw: Vec<f64> = (0..steps).map(|t| cosine_alpha_bar(t, steps)).collect();
    let beta: Vec<f64> = (0..steps)
        .map(|t| {
            let b = if t == 0 {
                1.0 - raw[0]
            } else {
                1.0 - raw[t] / raw[t - 1]
            };
            b.clamp(beta_min, beta_max)
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        steps,
        beta,
        alpha,
        alpha_bar,
        beta_min,
        beta_max,
    })
}

impl NoiseSchedule {
    /// `alpha_bar` at `t`, with `None` (the step before 0) mapping to one.
    pub fn alpha_bar_at(&self, t: Option<usize>) -> f64 {
        t.map_or(1.0, |t| self.alpha_bar[t])
    }

    /// Posterior variance `(1 - abar_{t-1}) / (1 - abar_t) * beta_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        let prev = self.alpha_bar_at(t.checked_sub(1));
        (1.0 - prev) / (1.0 - self.alpha_bar[t]) * self.beta[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.steps {
            return Err(Error::Input(format!(
                "step {t} outside schedule of length {}",
                self.steps
            )));
        }
        Ok(())
    }
}
