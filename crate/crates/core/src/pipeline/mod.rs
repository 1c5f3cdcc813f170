//! Training (joint encoder and generator optimisation with EMA), the three
//! inference schemes and checkpoint persistence.

mod batch;
mod checkpoint;
mod config;
mod infer;
mod optim;
mod train;

pub use batch::{context_batch, gather_frames, target_batch, Geometry};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, rng_digest, save_checkpoint, Checkpoint, CHECKPOINT_KIND};
pub use config::{FeedbackNoise, InferConfig, TrainConfig};
pub use infer::{feedback_frames, infer_ar, infer_direct, infer_seq2seq, Forecaster, InferStats};
pub use optim::{clip_grad_norm, ema_decay_at, ema_update, global_norm, is_encoder_param, Adam};
pub use train::{geometry_for, schedule_for, train, StepMetrics, TrainOutcome};

pub use crate::nets::{InferenceMode, ModelKind, ModelSpec};
