use csipred_autograd::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub num_sample_steps: usize,
    pub zeta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_sample_steps: 3,
            zeta: 0.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, train_steps: usize) -> Result<()> {
        if self.num_sample_steps == 0 || self.num_sample_steps > train_steps {
            return Err(Error::config(
                "infer.num_sample_steps",
                format!("{} not in [1, {train_steps}]", self.num_sample_steps),
            ));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::config("infer.zeta", format!("{} not in [0, 1]", self.zeta)));
        }
        Ok(())
    }
}

fn check_shapes(op: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Input(format!("{op}: length {a} vs {b}")));
    }
    Ok(())
}

/// `sqrt(abar_t) h0 + sqrt(1 - abar_t) eps`.
pub fn forward_diffuse<T: Float>(h0: &[T], t: usize, eps: &[T], sched: &NoiseSchedule) -> Result<Vec<T>> {
    check_shapes("forward_diffuse", h0.len(), eps.len())?;
    sched.check_step(t)?;
    let ab = sched.alpha_bar[t];
    let (a, b) = (T::of(ab.sqrt()), T::of((1.0 - ab).sqrt()));
    Ok(h0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// Noise implied by a clean-sample estimate: `(h_t - sqrt(abar_t) h0) / sqrt(1 - abar_t)`.
pub fn noise_from_sample<T: Float>(ht: &[T], h0hat: &[T], t: usize, sched: &NoiseSchedule) -> Result<Vec<T>> {
    check_shapes("noise_from_sample", ht.len(), h0hat.len())?;
    sched.check_step(t)?;
    let ab = sched.alpha_bar[t];
    if ab >= 1.0 - 1e-12 {
        return Err(Error::DegenerateStep(format!("alpha_bar[{t}] = {ab}")));
    }
    let a = T::of(ab.sqrt());
    let inv = T::of(1.0 / (1.0 - ab).sqrt());
    Ok(ht.iter().zip(h0hat).map(|(&x, &h)| (x - a * h) * inv).collect())
}

/// `zeta * sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev)`.
pub fn ddim_sigma(t: usize, t_prev: Option<usize>, zeta: f64, sched: &NoiseSchedule) -> f64 {
    let ab = sched.alpha_bar[t];
    let ab_prev = sched.alpha_bar_at(t_prev);
    zeta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt()
}

/// One DDIM update from `t` to `t_prev` (`None` is the final step, which
/// returns the clean estimate). Draws noise only when `sigma > 0`.
pub fn ddim_step<T: Float, R: Rng + ?Sized>(
    ht: &[T],
    h0hat: &[T],
    t: usize,
    t_prev: Option<usize>,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<T>> {
    if let Some(p) = t_prev {
        if p >= t {
            return Err(Error::Input(format!("ddim_step: t_prev {p} must precede t {t}")));
        }
    }
    let eps = noise_from_sample(ht, h0hat, t, sched)?;
    let ab_prev = sched.alpha_bar_at(t_prev);
    let sigma = ddim_sigma(t, t_prev, cfg.zeta, sched);
    let mut dir = 1.0 - ab_prev - sigma * sigma;
    if dir < 0.0 {
        // Rounding can push the exact-zero case slightly negative.
        if dir > -1e-12 {
            dir = 0.0;
        } else {
            return Err(Error::InvalidSchedule(format!(
                "1 - abar_prev - sigma^2 = {dir} at t = {t}"
            )));
        }
    }
    let (a, b) = (T::of(ab_prev.sqrt()), T::of(dir.sqrt()));
    let mut out: Vec<T> = h0hat.iter().zip(&eps).map(|(&h, &e)| a * h + b * e).collect();
    if sigma > 0.0 {
        let s = T::of(sigma);
        for o in &mut out {
            *o += s * T::of(rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(out)
}

/// `n` evenly spaced steps from `steps - 1` downwards, each paired with its
/// successor; the last pairs with `None`.
pub fn make_substeps(steps: usize, n: usize) -> Result<Vec<(usize, Option<usize>)>> {
    if n == 0 || n > steps {
        return Err(Error::config(
            "infer.num_sample_steps",
            format!("{n} not in [1, {steps}]"),
        ));
    }
    let ts: Vec<usize> = (0..n).map(|i| steps - 1 - i * steps / n).collect();
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, ts.get(i + 1).copied()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substep_examples() {
        assert_eq!(make_substeps(2000, 1).unwrap(), vec![(1999, None)]);
        assert_eq!(make_substeps(2000, 2).unwrap(), vec![(1999, Some(999)), (999, None)]);
        let all = make_substeps(50, 50).unwrap();
        let visited: Vec<usize> = all.iter().map(|p| p.0).collect();
        assert_eq!(visited, (0..50).rev().collect::<Vec<_>>());
        assert!(make_substeps(10, 0).is_err());
        assert!(make_substeps(10, 11).is_err());
    }

    #[test]
    fn final_step_returns_clean_estimate() {
        let s = super::super::make_cosine_schedule(100, 1e-4, 2e-2).unwrap();
        let ht = [0.3f64, -1.0];
        let h0 = [0.1f64, 0.2];
        let cfg = SamplerConfig {
            num_sample_steps: 1,
            zeta: 1.0,
        };
        let mut rng = rand::rng();
        assert_eq!(ddim_step(&ht, &h0, 40, None, &cfg, &s, &mut rng).unwrap(), h0.to_vec());
    }
}
