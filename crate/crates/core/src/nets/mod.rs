//! Temporal encoders, denoising backbones and direct baselines on top of the
//! tape-based autograd engine. Every network is a pure function of its
//! [`ParamBundle`] and inputs.

mod baselines;
mod complexity;
mod ctx;
mod dit;
mod encoders;
pub mod gradcheck;
pub mod layers;
mod model;
mod params;
mod specs;
mod unet2d;
mod unet3d;

pub use baselines::{ConvLstmForecaster, GruForecaster, LinFormerForecaster};
pub use complexity::{estimate_flops, spec_param_count};
pub use ctx::Ctx;
pub use dit::Dit;
pub use encoders::{
    frame, ConvLstmCell, ConvLstmEncoder, GruLayer, GruStack, LinFormerEncoder, LinFormerTrunk, LstmState,
};
pub use layers::{sinusoid, Module, TimeEmbedding};
pub use model::{InferenceMode, Model, ModelKind, ModelSpec};
pub use params::{count_params, count_spec_params, Init, ParamBundle, ParamSpec};
pub use specs::{BackboneKind, BackboneSpec, EncoderKind, EncoderSpec};
pub use unet2d::{AttnBlock, ResBlock, UNet2d};
pub use unet3d::{mask_channel, UNet3d};
