use csipred_autograd::{Float, Tensor, Var};

use super::layers::{
    add_channel_bias, Conv3d, ConvTranspose2x, GroupNorm, LayerNorm, Linear, Module, SelfAttention, TimeEmbedding,
};
use super::{BackboneSpec, Ctx, ParamSpec};
use crate::error::{Error, Result};

/// conv -> GN -> +t -> SiLU -> conv -> GN -> SiLU.
#[derive(Debug, Clone)]
struct Block3d {
    conv1: Conv3d,
    norm1: GroupNorm,
    temb: Linear,
    conv2: Conv3d,
    norm2: GroupNorm,
}

impl Block3d {
    fn new(name: &str, cin: usize, cout: usize, temb_dim: usize) -> Self {
        Self {
            conv1: Conv3d::new(format!("{name}.conv1"), cin, cout, [3, 3, 3]),
            norm1: GroupNorm::new(format!("{name}.norm1"), cout),
            temb: Linear::new(format!("{name}.temb"), temb_dim, cout),
            conv2: Conv3d::new(format!("{name}.conv2"), cout, cout, [3, 3, 3]),
            norm2: GroupNorm::new(format!("{name}.norm2"), cout),
        }
    }

    fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, temb: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.norm1.forward(ctx, h)?;
        let e = self.temb.forward(ctx, temb)?;
        let h = add_channel_bias(ctx, h, e)?;
        let h = ctx.g.silu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = self.norm2.forward(ctx, h)?;
        Ok(ctx.g.silu(h))
    }
}

impl Module for Block3d {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.conv1.specs(out);
        self.norm1.specs(out);
        self.temb.specs(out);
        self.conv2.specs(out);
        self.norm2.specs(out);
    }
}

/// Self-attention across frames, independently at every spatial position.
#[derive(Debug, Clone)]
struct TemporalAttention {
    norm: LayerNorm,
    attn: SelfAttention,
}

impl TemporalAttention {
    fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let s = ctx.shape(x);
        let (b, c, f, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let t = ctx.g.permute(x, &[0, 3, 4, 2, 1])?;
        let t = ctx.g.reshape(t, &[b * h * w, f, c])?;
        let y = self.norm.forward(ctx, t)?;
        let y = self.attn.forward(ctx, y)?;
        let y = ctx.g.reshape(y, &[b, h, w, f, c])?;
        let y = ctx.g.permute(y, &[0, 4, 3, 1, 2])?;
        Ok(ctx.g.add(x, y)?)
    }
}

impl Module for TemporalAttention {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.norm.specs(out);
        self.attn.specs(out);
    }
}

/// Spatio-temporal U-Net over `[B, 3, F, H, W]` (real, imaginary, mask).
/// Pooling and upsampling act on the spatial axes only.
#[derive(Debug, Clone)]
pub struct UNet3d {
    pub in_channels: usize,
    pub out_channels: usize,
    time: TimeEmbedding,
    stem: Conv3d,
    enc: Vec<Block3d>,
    mid: Block3d,
    mid_attn: TemporalAttention,
    ups: Vec<ConvTranspose2x>,
    dec: Vec<Block3d>,
    head: Conv3d,
}

impl UNet3d {
    pub fn new(name: &str, spec: &BackboneSpec, in_channels: usize, out_channels: usize) -> Result<Self> {
        let base = spec.base_channels;
        let te = spec.time_embed_dim;
        let widths: Vec<usize> = spec.channel_multipliers.iter().map(|m| m * base).collect();
        let n = |s: String| format!("{name}.{s}");
        let mut enc = Vec::new();
        let mut ch = base;
        for (i, &w) in widths.iter().enumerate() {
            enc.push(Block3d::new(&n(format!("enc{i}")), ch, w, te));
            ch = w;
        }
        let mid = Block3d::new(&n("mid".into()), ch, ch, te);
        let mid_attn = TemporalAttention {
            norm: LayerNorm::new(n("mid_attn.norm".into()), ch),
            attn: SelfAttention::new(&n("mid_attn.attn".into()), ch, spec.heads)?,
        };
        // Decoder output widths: the encoder widths shifted down one level,
        // ending at the stem width.
        let mut outs: Vec<usize> = widths[..widths.len() - 1].iter().rev().copied().collect();
        outs.push(base);
        let mut ups = Vec::new();
        let mut dec = Vec::new();
        for (i, (&skip, &w)) in widths.iter().rev().zip(&outs).enumerate() {
            ups.push(ConvTranspose2x::new(n(format!("up{i}")), ch, w));
            dec.push(Block3d::new(&n(format!("dec{i}")), w + skip, w, te));
            ch = w;
        }
        Ok(Self {
            in_channels,
            out_channels,
            time: TimeEmbedding::new(&n("time".into()), spec.time_freq_dim, te),
            stem: Conv3d::new(n("stem".into()), in_channels, base, [3, 3, 3]),
            enc,
            mid,
            mid_attn,
            ups,
            dec,
            head: Conv3d::new(n("head".into()), ch, out_channels, [1, 1, 1]),
        })
    }

    /// Full-length output `[B, C_out, F, H, W]`.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, v: Var, ts: &[f64]) -> Result<Var> {
        let s = ctx.shape(v);
        if s.len() != 5 || s[1] != self.in_channels {
            return Err(Error::Input(format!(
                "unet3d expects [B, {}, F, H, W], got {s:?}",
                self.in_channels
            )));
        }
        let f = 1 << self.enc.len();
        if !s[3].is_multiple_of(f) || !s[4].is_multiple_of(f) {
            return Err(Error::config(
                "model.backbone",
                format!("{}x{} not divisible by {f}", s[3], s[4]),
            ));
        }
        let temb = self.time.forward(ctx, ts)?;
        let temb = ctx.g.silu(temb);
        let mut h = self.stem.forward(ctx, v)?;
        let mut skips = Vec::new();
        for blk in &self.enc {
            h = blk.forward(ctx, h, temb)?;
            skips.push(h);
            h = ctx.g.maxpool2(h)?;
        }
        h = self.mid.forward(ctx, h, temb)?;
        h = self.mid_attn.forward(ctx, h)?;
        for (up, blk) in self.ups.iter().zip(&self.dec) {
            h = up.forward(ctx, h)?;
            let skip = skips.pop().expect("skip bookkeeping");
            h = ctx.g.cat(&[h, skip], 1)?;
            h = blk.forward(ctx, h, temb)?;
        }
        self.head.forward(ctx, h)
    }

    /// Builds the stacked input: context frames, then noisy future frames,
    /// plus a mask channel that is 1 on context frames and 0 on future ones.
    /// `context` is `[B, N_p, 2, H, W]`, `noisy` is `[B, N_f, 2, H, W]`.
    pub fn stack_input<T: Float>(ctx: &mut Ctx<T>, context: Var, noisy: Var) -> Result<Var> {
        let cs = ctx.shape(context);
        let ns = ctx.shape(noisy);
        let (b, np, nf, h, w) = (cs[0], cs[1], ns[1], cs[3], cs[4]);
        let frames = ctx.g.cat(&[context, noisy], 1)?;
        let frames = ctx.g.permute(frames, &[0, 2, 1, 3, 4])?;
        let mask = mask_channel::<T>(b, np, nf, h, w);
        let mask = ctx.input(mask);
        Ok(ctx.g.cat(&[frames, mask], 1)?)
    }
}

/// `[B, 1, N_p + N_f, H, W]` with ones on the first `N_p` frames.
pub fn mask_channel<T: Float>(b: usize, np: usize, nf: usize, h: usize, w: usize) -> Tensor<T> {
    let f = np + nf;
    Tensor::from_fn(vec![b, 1, f, h, w], |i| {
        let frame = (i / (h * w)) % f;
        if frame < np {
            T::one()
        } else {
            T::zero()
        }
    })
}

impl Module for UNet3d {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.time.specs(out);
        self.stem.specs(out);
        for b in &self.enc {
            b.specs(out);
        }
        self.mid.specs(out);
        self.mid_attn.specs(out);
        for u in &self.ups {
            u.specs(out);
        }
        for d in &self.dec {
            d.specs(out);
        }
        self.head.specs(out);
    }
}
