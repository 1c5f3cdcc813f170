use csipred_autograd::Tensor;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::chansim::{dataset_to_file, DatasetBundle, MinMaxScaler};
use crate::error::{Error, Result};
use crate::nets::InferenceMode;
use crate::pipeline::{Checkpoint, Forecaster, InferConfig};

/// Output of a predictor for a batch of `B` samples and `horizon` frames.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    /// Min-max scaled frames `[B, horizon, 2, N_t, N_c]`, inverse-scaled by the evaluator.
    Scaled(Tensor<f32>),
    /// Frames already in physical units, flattened in the same layout.
    Physical(Vec<f64>),
}

/// Anything that maps a corrupted context to future frames.
pub trait Predictor {
    fn label(&self) -> String;

    /// Number of trailing context frames consumed.
    fn context_len(&self) -> usize;

    /// DDIM substeps reported in result rows; 0 for non-diffusion predictors.
    fn sampling_steps(&self, icfg: &InferConfig) -> usize;

    /// CSI frame size the predictor expects, when it has one.
    fn frame_shape(&self) -> Option<(usize, usize)> {
        None
    }

    fn digest(&self) -> String {
        String::new()
    }

    /// `context` is `[B, context_len, 2, N_t, N_c]` after corruption; `truth`
    /// holds the scaled ground-truth future and is only for test stubs.
    fn predict(
        &self,
        context: &Tensor<f32>,
        truth: &Tensor<f32>,
        icfg: &InferConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Forecast>;
}

/// A trained checkpoint behind the [`Predictor`] interface.
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub forecaster: Forecaster,
    pub context_len: usize,
    digest: String,
}

impl ModelPredictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            forecaster: Forecaster::from_checkpoint(ckpt)?,
            context_len: ckpt.spec.n_past,
            digest: checkpoint_digest(ckpt)?,
        })
    }

    pub fn with_context_len(&self, context_len: usize) -> Self {
        Self {
            context_len,
            ..self.clone()
        }
    }

    pub fn mode(&self) -> InferenceMode {
        self.forecaster.mode()
    }
}

impl Predictor for ModelPredictor {
    fn label(&self) -> String {
        self.forecaster.model.spec.name.label().to_string()
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn sampling_steps(&self, icfg: &InferConfig) -> usize {
        if self.forecaster.model.spec.is_diffusion() {
            icfg.num_sample_steps
        } else {
            0
        }
    }

    fn frame_shape(&self) -> Option<(usize, usize)> {
        let s = &self.forecaster.model.spec;
        Some((s.num_tx, s.num_sc))
    }

    fn digest(&self) -> String {
        self.digest.clone()
    }

    fn predict(
        &self,
        context: &Tensor<f32>,
        truth: &Tensor<f32>,
        icfg: &InferConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Forecast> {
        let (pred, _) = self.forecaster.predict(context, truth.shape()[1], icfg, rng)?;
        Ok(Forecast::Scaled(pred))
    }
}

/// Returns the ground truth; scores the metric floor.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleStub {
    pub context_len: usize,
}

impl Predictor for OracleStub {
    fn label(&self) -> String {
        "oracle".into()
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn sampling_steps(&self, _: &InferConfig) -> usize {
        0
    }

    fn predict(&self, _: &Tensor<f32>, truth: &Tensor<f32>, _: &InferConfig, _: &mut dyn RngCore) -> Result<Forecast> {
        Ok(Forecast::Scaled(truth.clone()))
    }
}

/// Predicts an all-zero channel; scores exactly 0 dB.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroStub {
    pub context_len: usize,
}

impl Predictor for ZeroStub {
    fn label(&self) -> String {
        "zero".into()
    }

    fn context_len(&self) -> usize {
        self.context_len
    }

    fn sampling_steps(&self, _: &InferConfig) -> usize {
        0
    }

    fn predict(&self, _: &Tensor<f32>, truth: &Tensor<f32>, _: &InferConfig, _: &mut dyn RngCore) -> Result<Forecast> {
        Ok(Forecast::Physical(vec![0.0; truth.numel()]))
    }
}

impl Forecast {
    pub(crate) fn into_physical(self, scaler: &MinMaxScaler, expected: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            Forecast::Scaled(t) => t.data().iter().map(|&x| scaler.inverse(x as f64)).collect(),
            Forecast::Physical(v) => v,
        };
        if v.len() != expected {
            return Err(Error::Input(format!(
                "predictor returned {} values, expected {expected}",
                v.len()
            )));
        }
        Ok(v)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn checkpoint_digest(ckpt: &Checkpoint) -> Result<String> {
    Ok(sha256_hex(&ckpt.to_file()?.to_bytes()))
}

pub fn dataset_digest(data: &DatasetBundle) -> String {
    sha256_hex(&dataset_to_file(data).to_bytes())
}

pub(crate) fn json_digest<S: serde::Serialize>(value: &S) -> String {
    sha256_hex(&serde_json::to_vec(value).unwrap_or_default())
}
