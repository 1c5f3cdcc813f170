use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NMSE_FLOOR_DB: f64 = -120.0;
pub const NMSE_CEIL_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    HuberOnSample,
    MseOnSample,
    MseOnNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub huber_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::HuberOnSample,
            huber_delta: 0.016,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::config(
                "train.loss.huber_delta",
                format!("must be positive, got {}", self.huber_delta),
            ));
        }
        Ok(())
    }
}

/// Mean element-wise Huber loss.
pub fn huber_loss(y: &[f64], yhat: &[f64], delta: f64) -> Result<f64> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::Input(format!(
            "huber_loss: lengths {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let r = (a - b).abs();
            if r <= delta {
                0.5 * r * r
            } else {
                delta * (r - 0.5 * delta)
            }
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Converts a linear error ratio to dB, clamped to the reporting range.
pub fn ratio_to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * ratio.log10()).clamp(NMSE_FLOOR_DB, NMSE_CEIL_DB)
}

/// `||h - hhat||^2 / ||h||^2` for each of `n_samples` equally sized samples.
pub fn nmse_ratios(truth: &[f64], pred: &[f64], n_samples: usize) -> Result<Vec<f64>> {
    if truth.len() != pred.len() || n_samples == 0 || !truth.len().is_multiple_of(n_samples) {
        return Err(Error::Metric(format!(
            "nmse: lengths {} vs {} over {n_samples} samples",
            truth.len(),
            pred.len()
        )));
    }
    let per = truth.len() / n_samples;
    truth
        .chunks(per)
        .zip(pred.chunks(per))
        .enumerate()
        .map(|(i, (h, p))| {
            let norm: f64 = h.iter().map(|v| v * v).sum();
            if norm == 0.0 {
                return Err(Error::Metric(format!("sample {i} has zero-norm ground truth")));
            }
            let err: f64 = h.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(err / norm)
        })
        .collect()
}

/// `10 log10(mean_i ||h_i - hhat_i||^2 / ||h_i||^2)`, clamped to [-120, 40] dB.
pub fn nmse_db(truth: &[f64], pred: &[f64], n_samples: usize) -> Result<f64> {
    let r = nmse_ratios(truth, pred, n_samples)?;
    Ok(ratio_to_db(r.iter().sum::<f64>() / r.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        assert_eq!(huber_loss(&[0.3, -0.2], &[0.3, -0.2], 0.016).unwrap(), 0.0);
        let d = 0.016;
        assert!((huber_loss(&[0.0], &[d], d).unwrap() - d * d / 2.0).abs() < 1e-18);
        assert!((huber_loss(&[0.0], &[0.1], d).unwrap() - 0.001472).abs() < 1e-15);
    }

    #[test]
    fn nmse_examples() {
        let h = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(nmse_db(&h, &h, 2).unwrap(), NMSE_FLOOR_DB);
        assert_eq!(nmse_db(&h, &[0.0; 4], 2).unwrap(), 0.0);
        let twice: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        assert_eq!(nmse_db(&h, &twice, 2).unwrap(), 0.0);
        assert!(matches!(nmse_db(&[0.0, 0.0, 1.0, 1.0], &h, 2), Err(Error::Metric(_))));
    }
}
