use csipred_autograd::{Float, Tensor, Var};

use super::{Ctx, Init, ParamSpec};
use crate::error::{Error, Result};

/// Anything that owns parameters.
pub trait Module {
    fn specs(&self, out: &mut Vec<ParamSpec>);
}

/// Largest group count up to 8 that divides `channels`.
pub fn norm_groups(channels: usize) -> usize {
    (1..=8.min(channels))
        .rev()
        .find(|g| channels.is_multiple_of(*g))
        .unwrap_or(1)
}

fn join(prefix: &str, leaf: &str) -> String {
    format!("{prefix}.{leaf}")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub fin: usize,
    pub fout: usize,
    pub bias: bool,
    pub zero_init: bool,
}

impl Linear {
    pub fn new(name: impl Into<String>, fin: usize, fout: usize) -> Self {
        Self {
            name: name.into(),
            fin,
            fout,
            bias: true,
            zero_init: false,
        }
    }

    pub fn zeroed(name: impl Into<String>, fin: usize, fout: usize) -> Self {
        Self {
            zero_init: true,
            ..Self::new(name, fin, fout)
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let w = ctx.p(&join(&self.name, "w"))?;
        let b = if self.bias {
            Some(ctx.p(&join(&self.name, "b"))?)
        } else {
            None
        };
        Ok(ctx.g.linear(x, w, b)?)
    }
}

impl Module for Linear {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let init = if self.zero_init {
            Init::Zeros
        } else {
            Init::Uniform(1.0 / (self.fin as f64).sqrt())
        };
        out.push(ParamSpec::new(join(&self.name, "w"), vec![self.fout, self.fin], init));
        if self.bias {
            out.push(ParamSpec::new(join(&self.name, "b"), vec![self.fout], init));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Stride 1, "same" padding.
    pub fn same(name: impl Into<String>, cin: usize, cout: usize, k: usize) -> Self {
        Self {
            name: name.into(),
            cin,
            cout,
            k,
            stride: 1,
            pad: k / 2,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let w = ctx.p(&join(&self.name, "w"))?;
        let b = ctx.p(&join(&self.name, "b"))?;
        Ok(ctx.g.conv2d(x, w, Some(b), self.stride, self.pad)?)
    }
}

impl Module for Conv2d {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let fan = self.cin * self.k * self.k;
        out.push(ParamSpec::fan_in(
            join(&self.name, "w"),
            vec![self.cout, self.cin, self.k, self.k],
            fan,
        ));
        out.push(ParamSpec::fan_in(join(&self.name, "b"), vec![self.cout], fan));
    }
}

#[derive(Debug, Clone)]
pub struct Conv3d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: [usize; 3],
}

impl Conv3d {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: [usize; 3]) -> Self {
        Self {
            name: name.into(),
            cin,
            cout,
            k,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let w = ctx.p(&join(&self.name, "w"))?;
        let b = ctx.p(&join(&self.name, "b"))?;
        let pad = [self.k[0] / 2, self.k[1] / 2, self.k[2] / 2];
        Ok(ctx.g.conv3d(x, w, Some(b), [1, 1, 1], pad)?)
    }
}

impl Module for Conv3d {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let fan = self.cin * self.k.iter().product::<usize>();
        let shape = vec![self.cout, self.cin, self.k[0], self.k[1], self.k[2]];
        out.push(ParamSpec::fan_in(join(&self.name, "w"), shape, fan));
        out.push(ParamSpec::fan_in(join(&self.name, "b"), vec![self.cout], fan));
    }
}

/// 2x spatial upsampling of `[B, C, F, H, W]` with a 1x2x2 kernel and stride.
#[derive(Debug, Clone)]
pub struct ConvTranspose2x {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
}

impl ConvTranspose2x {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize) -> Self {
        Self {
            name: name.into(),
            cin,
            cout,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let s = ctx.shape(x);
        let (b, f, h, w) = (s[0], s[2], s[3], s[4]);
        let wt = ctx.p(&join(&self.name, "w"))?;
        let bias = ctx.p(&join(&self.name, "b"))?;
        let g = &mut ctx.g;
        let xt = g.permute(x, &[0, 2, 3, 4, 1])?;
        let y = g.linear(xt, wt, None)?;
        let y = g.reshape(y, &[b, f, h, w, self.cout, 2, 2])?;
        let y = g.permute(y, &[0, 4, 1, 2, 5, 3, 6])?;
        let y = g.reshape(y, &[b, self.cout, f, 2 * h, 2 * w])?;
        let bias = g.reshape(bias, &[1, self.cout, 1, 1, 1])?;
        Ok(g.add(y, bias)?)
    }
}

impl Module for ConvTranspose2x {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let fan = self.cin * 4;
        out.push(ParamSpec::fan_in(
            join(&self.name, "w"),
            vec![self.cout * 4, self.cin],
            fan,
        ));
        out.push(ParamSpec::fan_in(join(&self.name, "b"), vec![self.cout], fan));
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub name: String,
    pub groups: usize,
    pub channels: usize,
}

impl GroupNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self::with_groups(name, norm_groups(channels), channels)
    }

    pub fn with_groups(name: impl Into<String>, groups: usize, channels: usize) -> Self {
        Self {
            name: name.into(),
            groups,
            channels,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let g = ctx.p(&join(&self.name, "gamma"))?;
        let b = ctx.p(&join(&self.name, "beta"))?;
        Ok(ctx.g.group_norm(x, self.groups, Some((g, b)), 1e-5)?)
    }
}

impl Module for GroupNorm {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec::new(
            join(&self.name, "gamma"),
            vec![self.channels],
            Init::Ones,
        ));
        out.push(ParamSpec::new(
            join(&self.name, "beta"),
            vec![self.channels],
            Init::Zeros,
        ));
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
    pub affine: bool,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            affine: true,
            eps: 1e-5,
        }
    }

    pub fn plain(dim: usize) -> Self {
        Self {
            name: String::new(),
            dim,
            affine: false,
            eps: 1e-6,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let affine = if self.affine {
            Some((ctx.p(&join(&self.name, "gamma"))?, ctx.p(&join(&self.name, "beta"))?))
        } else {
            None
        };
        Ok(ctx.g.layer_norm(x, affine, self.eps)?)
    }
}

impl Module for LayerNorm {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        if self.affine {
            out.push(ParamSpec::new(join(&self.name, "gamma"), vec![self.dim], Init::Ones));
            out.push(ParamSpec::new(join(&self.name, "beta"), vec![self.dim], Init::Zeros));
        }
    }
}

/// Raw sinusoidal encoding `[sin(t w_0..), cos(t w_0..)]`, shape `[B, dim]`.
pub fn sinusoid<T: Float>(ts: &[f64], dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::config(
            "backbone.time_embed_dim",
            format!("sinusoid width {dim} must be even"),
        ));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let freqs = (0..half).map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp() * t);
        out.extend(freqs.clone().map(|a| T::of(a.sin())));
        out.extend(freqs.map(|a| T::of(a.cos())));
    }
    Ok(Tensor::new(vec![ts.len(), dim], out)?)
}

/// Sinusoid followed by a two-layer SiLU MLP.
#[derive(Debug, Clone)]
pub struct TimeEmbedding {
    pub freq_dim: usize,
    pub l1: Linear,
    pub l2: Linear,
}

impl TimeEmbedding {
    pub fn new(name: &str, freq_dim: usize, out: usize) -> Self {
        Self {
            freq_dim,
            l1: Linear::new(join(name, "l1"), freq_dim, out),
            l2: Linear::new(join(name, "l2"), out, out),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.l2.fout
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, ts: &[f64]) -> Result<Var> {
        let raw = sinusoid::<T>(ts, self.freq_dim)?;
        let x = ctx.input(raw);
        let h = self.l1.forward(ctx, x)?;
        let h = ctx.g.silu(h);
        self.l2.forward(ctx, h)
    }
}

impl Module for TimeEmbedding {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.l1.specs(out);
        self.l2.specs(out);
    }
}

/// Multi-head scaled dot-product self-attention over `[B, N, D]` tokens.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub heads: usize,
    pub dim: usize,
    pub qkv: Linear,
    pub proj: Linear,
}

impl SelfAttention {
    pub fn new(name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::config(name, format!("{heads} heads do not divide width {dim}")));
        }
        Ok(Self {
            heads,
            dim,
            qkv: Linear::new(join(name, "qkv"), dim, 3 * dim),
            proj: Linear::new(join(name, "proj"), dim, dim),
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let s = ctx.shape(x);
        let (b, n) = (s[0], s[1]);
        let (h, d) = (self.heads, self.dim);
        let hd = d / h;
        let qkv = self.qkv.forward(ctx, x)?;
        let g = &mut ctx.g;
        let split = |g: &mut csipred_autograd::Graph<T>, i: usize| -> Result<Var> {
            let part = g.narrow(qkv, 2, i * d, d)?;
            let part = g.reshape(part, &[b, n, h, hd])?;
            Ok(g.permute(part, &[0, 2, 1, 3])?)
        };
        let q = split(g, 0)?;
        let k = split(g, 1)?;
        let v = split(g, 2)?;
        let kt = g.transpose(k, 2, 3)?;
        let scores = g.matmul(q, kt)?;
        let scores = g.scale(scores, 1.0 / (hd as f64).sqrt());
        let attn = g.softmax(scores)?;
        let o = g.matmul(attn, v)?;
        let o = g.permute(o, &[0, 2, 1, 3])?;
        let o = g.reshape(o, &[b, n, d])?;
        self.proj.forward(ctx, o)
    }
}

impl Module for SelfAttention {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.qkv.specs(out);
        self.proj.specs(out);
    }
}

/// Adds a per-sample, per-channel vector `[B, C]` to a map `[B, C, ...]`.
pub fn add_channel_bias<T: Float>(ctx: &mut Ctx<T>, x: Var, v: Var) -> Result<Var> {
    let s = ctx.shape(x);
    let mut shape = vec![s[0], s[1]];
    shape.extend(std::iter::repeat_n(1, s.len() - 2));
    let v = ctx.g.reshape(v, &shape)?;
    Ok(ctx.g.add(x, v)?)
}
