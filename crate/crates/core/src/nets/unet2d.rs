use csipred_autograd::{Float, Var};

use super::layers::{add_channel_bias, Conv2d, GroupNorm, Linear, Module, SelfAttention, TimeEmbedding};
use super::{BackboneSpec, Ctx, ParamSpec};
use crate::error::{Error, Result};

/// GN -> SiLU -> conv, + projected timestep, GN -> SiLU -> conv, + shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    temb: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    shortcut: Option<Conv2d>,
}

impl ResBlock {
    pub fn new(name: &str, cin: usize, cout: usize, temb_dim: usize) -> Self {
        Self {
            norm1: GroupNorm::new(format!("{name}.norm1"), cin),
            conv1: Conv2d::same(format!("{name}.conv1"), cin, cout, 3),
            temb: Linear::new(format!("{name}.temb"), temb_dim, cout),
            norm2: GroupNorm::new(format!("{name}.norm2"), cout),
            conv2: Conv2d::same(format!("{name}.conv2"), cout, cout, 3),
            shortcut: (cin != cout).then(|| Conv2d::same(format!("{name}.skip"), cin, cout, 1)),
        }
    }

    /// `temb` is the already activated embedding `silu(e(t))`, `[B, E]`.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, temb: Var) -> Result<Var> {
        let h = self.norm1.forward(ctx, x)?;
        let h = ctx.g.silu(h);
        let h = self.conv1.forward(ctx, h)?;
        let e = self.temb.forward(ctx, temb)?;
        let h = add_channel_bias(ctx, h, e)?;
        let h = self.norm2.forward(ctx, h)?;
        let h = ctx.g.silu(h);
        let h = self.conv2.forward(ctx, h)?;
        let skip = match &self.shortcut {
            Some(c) => c.forward(ctx, x)?,
            None => x,
        };
        Ok(ctx.g.add(h, skip)?)
    }
}

impl Module for ResBlock {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.norm1.specs(out);
        self.conv1.specs(out);
        self.temb.specs(out);
        self.norm2.specs(out);
        self.conv2.specs(out);
        if let Some(s) = &self.shortcut {
            s.specs(out);
        }
    }
}

/// Pre-norm single-head spatial self-attention with a residual connection.
#[derive(Debug, Clone)]
pub struct AttnBlock {
    norm: GroupNorm,
    attn: SelfAttention,
}

impl AttnBlock {
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            norm: GroupNorm::new(format!("{name}.norm"), channels),
            attn: SelfAttention::new(&format!("{name}.attn"), channels, 1)?,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let s = ctx.shape(x);
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        let h = self.norm.forward(ctx, x)?;
        let h = ctx.g.reshape(h, &[b, c, hw])?;
        let h = ctx.g.transpose(h, 1, 2)?;
        let h = self.attn.forward(ctx, h)?;
        let h = ctx.g.transpose(h, 1, 2)?;
        let h = ctx.g.reshape(h, &s)?;
        Ok(ctx.g.add(x, h)?)
    }
}

impl Module for AttnBlock {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.norm.specs(out);
        self.attn.specs(out);
    }
}

#[derive(Debug, Clone)]
struct Stage {
    res: Vec<ResBlock>,
    attn: Vec<AttnBlock>,
    resample: Option<Conv2d>,
}

/// Conditional 2-D U-Net: `[B, C_in, H, W]` and timesteps to `[B, C_out, H, W]`.
#[derive(Debug, Clone)]
pub struct UNet2d {
    pub in_channels: usize,
    pub out_channels: usize,
    time: TimeEmbedding,
    conv_in: Conv2d,
    down: Vec<Stage>,
    mid: (ResBlock, AttnBlock, ResBlock),
    up: Vec<Stage>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl UNet2d {
    pub fn new(name: &str, spec: &BackboneSpec, in_channels: usize, out_channels: usize) -> Result<Self> {
        let base = spec.base_channels;
        let te = spec.time_embed_dim;
        let levels = spec.channel_multipliers.len();
        let widths: Vec<usize> = spec.channel_multipliers.iter().map(|m| m * base).collect();
        let n = |s: String| format!("{name}.{s}");
        let mut skips = vec![base];
        let mut ch = base;
        let mut down = Vec::new();
        for (i, &w) in widths.iter().enumerate() {
            let mut stage = Stage {
                res: Vec::new(),
                attn: Vec::new(),
                resample: None,
            };
            for j in 0..spec.layers_per_block {
                stage.res.push(ResBlock::new(&n(format!("down{i}.res{j}")), ch, w, te));
                if spec.attention_flags[i] {
                    stage.attn.push(AttnBlock::new(&n(format!("down{i}.attn{j}")), w)?);
                }
                ch = w;
                skips.push(ch);
            }
            if i + 1 < levels {
                stage.resample = Some(Conv2d {
                    stride: 2,
                    ..Conv2d::same(n(format!("down{i}.downsample")), ch, ch, 3)
                });
                skips.push(ch);
            }
            down.push(stage);
        }
        let mid = (
            ResBlock::new(&n("mid.res0".into()), ch, ch, te),
            AttnBlock::new(&n("mid.attn".into()), ch)?,
            ResBlock::new(&n("mid.res1".into()), ch, ch, te),
        );
        let mut up = Vec::new();
        for (i, &w) in widths.iter().enumerate().rev() {
            let mut stage = Stage {
                res: Vec::new(),
                attn: Vec::new(),
                resample: None,
            };
            for j in 0..=spec.layers_per_block {
                let skip = skips.pop().expect("skip bookkeeping");
                stage
                    .res
                    .push(ResBlock::new(&n(format!("up{i}.res{j}")), ch + skip, w, te));
                if spec.attention_flags[i] {
                    stage.attn.push(AttnBlock::new(&n(format!("up{i}.attn{j}")), w)?);
                }
                ch = w;
            }
            if i > 0 {
                stage.resample = Some(Conv2d::same(n(format!("up{i}.upsample")), ch, ch, 3));
            }
            up.push(stage);
        }
        debug_assert!(skips.is_empty());
        Ok(Self {
            in_channels,
            out_channels,
            time: TimeEmbedding::new(&n("time".into()), spec.time_freq_dim, te),
            conv_in: Conv2d::same(n("conv_in".into()), in_channels, base, 3),
            down,
            mid,
            up,
            norm_out: GroupNorm::new(n("norm_out".into()), ch),
            conv_out: Conv2d::same(n("conv_out".into()), ch, out_channels, 3),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, ts: &[f64]) -> Result<Var> {
        self.forward_ablated(ctx, x, ts, None)
    }

    /// Forward pass with the skip connection at position `zero_skip` (in push
    /// order) replaced by zeros. Used to probe the wiring.
    pub fn forward_ablated<T: Float>(
        &self,
        ctx: &mut Ctx<T>,
        x: Var,
        ts: &[f64],
        zero_skip: Option<usize>,
    ) -> Result<Var> {
        let s = ctx.shape(x);
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(Error::Input(format!(
                "unet2d expects [B, {}, H, W], got {s:?}",
                self.in_channels
            )));
        }
        let f = 1 << (self.down.len() - 1);
        if !s[2].is_multiple_of(f) || !s[3].is_multiple_of(f) {
            return Err(Error::config(
                "model.backbone",
                format!("{}x{} not divisible by {f}", s[2], s[3]),
            ));
        }
        let temb = self.time.forward(ctx, ts)?;
        let temb = ctx.g.silu(temb);
        let mut h = self.conv_in.forward(ctx, x)?;
        let mut skips = vec![h];
        for stage in &self.down {
            for (j, res) in stage.res.iter().enumerate() {
                h = res.forward(ctx, h, temb)?;
                if let Some(a) = stage.attn.get(j) {
                    h = a.forward(ctx, h)?;
                }
                skips.push(h);
            }
            if let Some(d) = &stage.resample {
                h = d.forward(ctx, h)?;
                skips.push(h);
            }
        }
        h = self.mid.0.forward(ctx, h, temb)?;
        h = self.mid.1.forward(ctx, h)?;
        h = self.mid.2.forward(ctx, h, temb)?;
        for stage in &self.up {
            for (j, res) in stage.res.iter().enumerate() {
                let mut skip = skips.pop().expect("skip bookkeeping");
                if zero_skip == Some(skips.len()) {
                    let zeros = csipred_autograd::Tensor::zeros(ctx.shape(skip));
                    skip = ctx.input(zeros);
                }
                h = ctx.g.cat(&[h, skip], 1)?;
                h = res.forward(ctx, h, temb)?;
                if let Some(a) = stage.attn.get(j) {
                    h = a.forward(ctx, h)?;
                }
            }
            if let Some(u) = &stage.resample {
                h = ctx.g.upsample2(h)?;
                h = u.forward(ctx, h)?;
            }
        }
        h = self.norm_out.forward(ctx, h)?;
        h = ctx.g.silu(h);
        self.conv_out.forward(ctx, h)
    }
}

impl Module for UNet2d {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.time.specs(out);
        self.conv_in.specs(out);
        for stage in self.down.iter().chain(&self.up) {
            for r in &stage.res {
                r.specs(out);
            }
            for a in &stage.attn {
                a.specs(out);
            }
            if let Some(c) = &stage.resample {
                c.specs(out);
            }
        }
        self.mid.0.specs(out);
        self.mid.1.specs(out);
        self.mid.2.specs(out);
        self.norm_out.specs(out);
        self.conv_out.specs(out);
    }
}
