use serde::{Deserialize, Serialize};

use crate::chansim::CorruptionMode;
use crate::diffusion::{LossConfig, SamplerConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub lr_encoder: f64,
    pub lr_generator: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub ema_decay: f64,
    pub ema_interval: usize,
    /// Ramp the effective decay as `min(decay, (1 + k) / (10 + k))` over the
    /// first EMA updates.
    pub ema_warmup: bool,
    pub grad_clip_norm: f64,
    pub snr_range_db: [f64; 2],
    pub corruption: CorruptionMode,
    pub loss: LossConfig,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Draw one diffusion step per sample instead of one per batch.
    pub per_sample_t: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 512,
            max_steps: None,
            lr_encoder: 1e-3,
            lr_generator: 1e-3,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            ema_decay: 0.995,
            ema_interval: 10,
            ema_warmup: true,
            grad_clip_norm: 1.0,
            snr_range_db: [-20.0, 20.0],
            corruption: CorruptionMode::Literal,
            loss: LossConfig::default(),
            diffusion_steps: 2000,
            beta_min: 1e-4,
            beta_max: 2e-2,
            per_sample_t: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |f: &str, m: String| Err(Error::config(format!("train.{f}"), m));
        for (f, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("ema_interval", self.ema_interval),
            ("diffusion_steps", self.diffusion_steps),
        ] {
            if v == 0 {
                return err(f, "must be at least 1".into());
            }
        }
        if self.max_steps == Some(0) {
            return err("max_steps", "must be at least 1".into());
        }
        for (f, v) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_generator", self.lr_generator),
            ("adam_eps", self.adam_eps),
            ("grad_clip_norm", self.grad_clip_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(f, format!("must be positive, got {v}"));
            }
        }
        if !self.adam_betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return err("adam_betas", format!("{:?} not in [0, 1)", self.adam_betas));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return err("ema_decay", format!("{} not in [0, 1]", self.ema_decay));
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return err("snr_range_db", format!("[{lo}, {hi}] is not an ordered interval"));
        }
        self.loss.validate()
    }
}

/// Noise added to each fed-back AR prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackNoise {
    /// Fixed standard deviation in scaled units.
    Sigma(f64),
    /// `sigma^2 = mean power of the prediction / rho` at the inference SNR;
    /// zero when no inference SNR is set.
    FromSnr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub num_sample_steps: usize,
    pub zeta: f64,
    pub feedback_noise: FeedbackNoise,
    /// Context corruption applied before inference.
    pub inference_snr_db: Option<f64>,
    pub corruption: CorruptionMode,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            num_sample_steps: 3,
            zeta: 0.0,
            feedback_noise: FeedbackNoise::FromSnr,
            inference_snr_db: None,
            corruption: CorruptionMode::Literal,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            num_sample_steps: self.num_sample_steps,
            zeta: self.zeta,
        }
    }

    pub fn validate(&self, train_steps: usize) -> Result<()> {
        self.sampler().validate(train_steps)?;
        if self.batch_size == 0 {
            return Err(Error::config("infer.batch_size", "must be at least 1"));
        }
        if let FeedbackNoise::Sigma(s) = self.feedback_noise {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(
                    "infer.feedback_noise",
                    format!("sigma {s} must be non-negative"),
                ));
            }
        }
        if let Some(s) = self.inference_snr_db {
            if !s.is_finite() {
                return Err(Error::config("infer.inference_snr_db", "must be finite"));
            }
        }
        Ok(())
    }
}
