use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Convlstm,
    Linformer,
    Gru,
    None,
}

/// Temporal encoder (or recurrent/Transformer baseline trunk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// ConvLSTM hidden channels, LinFormer model width or GRU units.
    pub hidden: usize,
    pub num_layers: usize,
    /// LinFormer feed-forward width.
    pub ff_dim: usize,
    pub latent_channels: usize,
    pub dropout: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Convlstm,
            hidden: 128,
            num_layers: 1,
            ff_dim: 512,
            latent_channels: 32,
            dropout: 0.0,
        }
    }
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == EncoderKind::None {
            return Ok(());
        }
        for (field, v) in [
            ("hidden", self.hidden),
            ("num_layers", self.num_layers),
            ("ff_dim", self.ff_dim),
            ("latent_channels", self.latent_channels),
        ] {
            if v == 0 {
                return Err(Error::config(format!("model.encoder.{field}"), "must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(
                "model.encoder.dropout",
                format!("{} not in [0, 1)", self.dropout),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Unet2d,
    Dit,
    Unet3d,
}

/// Denoising backbone widths and layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub base_channels: usize,
    pub channel_multipliers: Vec<usize>,
    pub attention_flags: Vec<bool>,
    pub layers_per_block: usize,
    pub time_embed_dim: usize,
    /// Width of the raw sinusoidal timestep encoding.
    pub time_freq_dim: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::unet2d()
    }
}

impl BackboneSpec {
    pub fn unet2d() -> Self {
        Self {
            kind: BackboneKind::Unet2d,
            base_channels: 32,
            channel_multipliers: vec![1, 2],
            attention_flags: vec![false, true],
            layers_per_block: 2,
            time_embed_dim: 256,
            time_freq_dim: 256,
            patch_size: 4,
            hidden_dim: 128,
            depth: 8,
            heads: 8,
            mlp_ratio: 2.0,
        }
    }

    pub fn dit() -> Self {
        Self {
            kind: BackboneKind::Dit,
            ..Self::unet2d()
        }
    }

    pub fn unet3d() -> Self {
        Self {
            kind: BackboneKind::Unet3d,
            channel_multipliers: vec![2, 4, 8],
            attention_flags: vec![false, false, false],
            ..Self::unet2d()
        }
    }

    pub fn validate(&self, num_tx: usize, num_sc: usize) -> Result<()> {
        let err = |f: &str, m: String| Err(Error::config(format!("model.backbone.{f}"), m));
        if self.base_channels == 0
            || self.time_embed_dim == 0
            || !self.time_freq_dim.is_multiple_of(2)
            || self.time_freq_dim == 0
        {
            return err(
                "base_channels",
                "widths must be positive and the sinusoid width even".into(),
            );
        }
        if self.channel_multipliers.is_empty() || self.channel_multipliers.contains(&0) {
            return err("channel_multipliers", format!("{:?}", self.channel_multipliers));
        }
        match self.kind {
            BackboneKind::Unet2d => {
                if self.attention_flags.len() != self.channel_multipliers.len() {
                    return err("attention_flags", "one flag per resolution level required".into());
                }
                if self.layers_per_block == 0 {
                    return err("layers_per_block", "must be at least 1".into());
                }
                let f = 1 << (self.channel_multipliers.len() - 1);
                if !num_tx.is_multiple_of(f) || !num_sc.is_multiple_of(f) {
                    return err("channel_multipliers", format!("{num_tx}x{num_sc} not divisible by {f}"));
                }
            }
            BackboneKind::Dit => {
                let p = self.patch_size;
                if p == 0 || !num_tx.is_multiple_of(p) || !num_sc.is_multiple_of(p) {
                    return err("patch_size", format!("{p} does not tile {num_tx}x{num_sc}"));
                }
                if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
                    return err(
                        "heads",
                        format!("{} heads do not divide {}", self.heads, self.hidden_dim),
                    );
                }
                if self.depth == 0 || !(self.mlp_ratio > 0.0) {
                    return err("depth", "depth and mlp_ratio must be positive".into());
                }
            }
            BackboneKind::Unet3d => {
                let f = 1 << self.channel_multipliers.len();
                if !num_tx.is_multiple_of(f) || !num_sc.is_multiple_of(f) {
                    return err("channel_multipliers", format!("{num_tx}x{num_sc} not divisible by {f}"));
                }
                let top = self.base_channels * self.channel_multipliers.last().unwrap();
                if self.heads == 0 || !top.is_multiple_of(self.heads) {
                    return err("heads", format!("{} heads do not divide {top}", self.heads));
                }
            }
        }
        Ok(())
    }
}
