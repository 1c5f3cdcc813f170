use std::path::Path;

use csipred_autograd::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::nets::{Model, ModelSpec, ParamBundle};
use crate::tensorfile::TensorFile;

pub const CHECKPOINT_KIND: &str = "csipred_checkpoint";

/// Trained model state: raw parameters, their EMA shadow and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub step: u64,
    pub ema_updates: u64,
    /// SHA-256 of the training RNG state at save time.
    pub rng_digest: String,
    pub raw: ParamBundle<f32>,
    pub ema: ParamBundle<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    spec: ModelSpec,
    train: TrainConfig,
    step: u64,
    ema_updates: u64,
    rng_digest: String,
}

pub fn rng_digest(rng: &ChaCha8Rng) -> String {
    let mut h = Sha256::new();
    h.update(rng.get_seed());
    h.update(rng.get_stream().to_le_bytes());
    h.update(rng.get_word_pos().to_le_bytes());
    hex::encode(h.finalize())
}

impl Checkpoint {
    /// Fails unless `spec` equals the stored spec.
    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if &self.spec != spec {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} ({:?}, n_past {}, n_future {}), requested {} ({:?}, n_past {}, n_future {})",
                self.spec.name,
                self.spec.inference_mode,
                self.spec.n_past,
                self.spec.n_future,
                spec.name,
                spec.inference_mode,
                spec.n_past,
                spec.n_future
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> Result<TensorFile> {
        let meta = Meta {
            spec: self.spec.clone(),
            train: self.train.clone(),
            step: self.step,
            ema_updates: self.ema_updates,
            rng_digest: self.rng_digest.clone(),
        };
        let meta = serde_json::to_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut f = TensorFile::new(CHECKPOINT_KIND, meta);
        for (prefix, bundle) in [("raw", &self.raw), ("ema", &self.ema)] {
            for (name, t) in &bundle.tensors {
                f.insert(format!("{prefix}/{name}"), t.shape().to_vec(), t.data().to_vec());
            }
        }
        Ok(f)
    }

    pub fn from_file(mut f: TensorFile, path: &Path) -> Result<Self> {
        if f.kind != CHECKPOINT_KIND {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                msg: format!("expected kind `{CHECKPOINT_KIND}`, found `{}`", f.kind),
            });
        }
        let meta: Meta = serde_json::from_value(f.meta.clone()).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("checkpoint header: {e}"),
        })?;
        let model = Model::new(&meta.spec)?;
        let mut raw = ParamBundle::default();
        let mut ema = ParamBundle::default();
        for ps in model.param_specs() {
            for (prefix, bundle) in [("raw", &mut raw), ("ema", &mut ema)] {
                let (shape, data) = f.take(&format!("{prefix}/{}", ps.name), path)?;
                if shape != ps.shape {
                    return Err(Error::Checkpoint(format!(
                        "`{prefix}/{}` has shape {shape:?}, spec requires {:?}",
                        ps.name, ps.shape
                    )));
                }
                bundle.tensors.insert(ps.name.clone(), Tensor::new(shape, data)?);
            }
        }
        if let Some(extra) = f.arrays.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected array `{extra}`")));
        }
        Ok(Self {
            spec: meta.spec,
            train: meta.train,
            step: meta.step,
            ema_updates: meta.ema_updates,
            rng_digest: meta.rng_digest,
            raw,
            ema,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.to_file()?.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_file(TensorFile::read(path)?, path)
}

/// Loads a checkpoint and requires it to hold exactly `spec`.
pub fn load_checkpoint_for(path: &Path, spec: &ModelSpec) -> Result<Checkpoint> {
    let c = load_checkpoint(path)?;
    c.check_spec(spec)?;
    Ok(c)
}
