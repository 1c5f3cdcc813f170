//! Diffusion-based channel state information prediction.
//!
//! * [`chansim`] simulates time-varying MIMO channels and packages datasets.
//! * [`diffusion`] holds the noise schedule, forward process, DDIM step and metrics.
//! * [`nets`] implements temporal encoders, denoising backbones and baselines.
//! * [`pipeline`] trains models and runs autoregressive, seq2seq and direct inference.
//! * [`evalkit`] evaluates checkpoints, runs sweeps and exports tables and plots.

pub mod chansim;
pub mod diffusion;
pub mod error;
pub mod evalkit;
pub mod nets;
pub mod pipeline;
pub mod tensorfile;

pub use error::{Error, Result};
