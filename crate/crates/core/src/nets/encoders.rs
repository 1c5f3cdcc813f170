use csipred_autograd::{Float, Tensor, Var};

use super::layers::{Conv2d, LayerNorm, Linear, Module};
use super::{Ctx, EncoderSpec, ParamSpec};
use crate::error::{Error, Result};

/// Convolutional LSTM cell: one 3x3 convolution over `[x, h]` yields the
/// stacked i, f, o, g gates.
#[derive(Debug, Clone)]
pub struct ConvLstmCell {
    pub input_channels: usize,
    pub hidden: usize,
    conv: Conv2d,
}

/// Hidden and cell maps, each `[B, hidden, H, W]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl ConvLstmCell {
    pub fn new(name: &str, input_channels: usize, hidden: usize) -> Self {
        Self {
            input_channels,
            hidden,
            conv: Conv2d::same(format!("{name}.conv"), input_channels + hidden, 4 * hidden, 3),
        }
    }

    pub fn zero_state<T: Float>(&self, ctx: &mut Ctx<T>, b: usize, h: usize, w: usize) -> LstmState {
        let z = Tensor::zeros(vec![b, self.hidden, h, w]);
        let h = ctx.input(z.clone());
        let c = ctx.input(z);
        LstmState { h, c }
    }

    pub fn step<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, state: LstmState) -> Result<LstmState> {
        let xs = ctx.shape(x);
        let hs = ctx.shape(state.h);
        let cs = ctx.shape(state.c);
        if xs.len() != 4 || xs[1] != self.input_channels || xs[0] != hs[0] || xs[2..] != hs[2..] || hs != cs {
            return Err(Error::Input(format!(
                "convlstm cell: input {xs:?} incompatible with hidden {hs:?} / cell {cs:?}"
            )));
        }
        let xh = ctx.g.cat(&[x, state.h], 1)?;
        let gates = self.conv.forward(ctx, xh)?;
        let (h, c) = ctx.g.lstm_cell(gates, state.c)?;
        Ok(LstmState { h, c })
    }
}

impl Module for ConvLstmCell {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.conv.specs(out);
    }
}

/// `[B, T, C, H, W]` -> frame `t` as `[B, C, H, W]`.
pub fn frame<T: Float>(ctx: &mut Ctx<T>, seq: Var, t: usize) -> Result<Var> {
    let s = ctx.shape(seq);
    let f = ctx.g.narrow(seq, 1, t, 1)?;
    Ok(ctx.g.reshape(f, &[s[0], s[2], s[3], s[4]])?)
}

/// ConvLSTM temporal encoder producing `Z` of shape `[B, latent, H, W]`.
#[derive(Debug, Clone)]
pub struct ConvLstmEncoder {
    pub cell: ConvLstmCell,
    proj: Conv2d,
}

impl ConvLstmEncoder {
    pub fn new(name: &str, spec: &EncoderSpec) -> Self {
        Self {
            cell: ConvLstmCell::new(&format!("{name}.cell"), 2, spec.hidden),
            proj: Conv2d::same(format!("{name}.proj"), spec.hidden, spec.latent_channels, 1),
        }
    }

    /// Advances the recurrence over every frame of `seq` starting from `state`
    /// (zero state when `None`).
    pub fn advance<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var, state: Option<LstmState>) -> Result<LstmState> {
        let s = ctx.shape(seq);
        if s.len() != 5 || s[1] == 0 || s[2] != 2 {
            return Err(Error::Input(format!(
                "convlstm encoder expects [B, T>=1, 2, H, W], got {s:?}"
            )));
        }
        let mut st = match state {
            Some(st) => st,
            None => self.cell.zero_state(ctx, s[0], s[3], s[4]),
        };
        for t in 0..s[1] {
            let x = frame(ctx, seq, t)?;
            st = self.cell.step(ctx, x, st)?;
        }
        Ok(st)
    }

    pub fn project<T: Float>(&self, ctx: &mut Ctx<T>, state: LstmState) -> Result<Var> {
        self.proj.forward(ctx, state.h)
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let st = self.advance(ctx, seq, None)?;
        self.project(ctx, st)
    }
}

impl Module for ConvLstmEncoder {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.cell.specs(out);
        self.proj.specs(out);
    }
}

/// Linear map along axis 1 of `[B, T, D]`, weight `[T_out, T]`.
#[derive(Debug, Clone)]
struct TimeLinear(Linear);

impl TimeLinear {
    fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let xt = ctx.g.transpose(x, 1, 2)?;
        let y = self.0.forward(ctx, xt)?;
        Ok(ctx.g.transpose(y, 1, 2)?)
    }
}

#[derive(Debug, Clone)]
struct LinBlock {
    tmlp: TimeLinear,
    norm1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    norm2: LayerNorm,
    dropout: f64,
}

impl LinBlock {
    fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let m = self.tmlp.forward(ctx, x)?;
        let m = ctx.dropout(m, self.dropout)?;
        let x = ctx.g.add(x, m)?;
        let x = self.norm1.forward(ctx, x)?;
        let h = self.ff1.forward(ctx, x)?;
        let h = ctx.g.gelu(h);
        let h = ctx.dropout(h, self.dropout)?;
        let h = self.ff2.forward(ctx, h)?;
        let x = ctx.g.add(x, h)?;
        self.norm2.forward(ctx, x)
    }
}

impl Module for LinBlock {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.tmlp.0.specs(out);
        self.norm1.specs(out);
        self.ff1.specs(out);
        self.ff2.specs(out);
        self.norm2.specs(out);
    }
}

/// Token trunk with time-mixing MLP blocks in place of self-attention.
/// Tokens are flattened per-step CSI frames.
#[derive(Debug, Clone)]
pub struct LinFormerTrunk {
    pub context: usize,
    pub dim: usize,
    embed: Linear,
    blocks: Vec<LinBlock>,
}

impl LinFormerTrunk {
    pub fn new(name: &str, spec: &EncoderSpec, context: usize, frame_len: usize) -> Self {
        let d = spec.hidden;
        let blocks = (0..spec.num_layers)
            .map(|i| {
                let n = format!("{name}.block{i}");
                LinBlock {
                    tmlp: TimeLinear(Linear::new(format!("{n}.tmlp"), context, context)),
                    norm1: LayerNorm::new(format!("{n}.norm1"), d),
                    ff1: Linear::new(format!("{n}.ff1"), d, spec.ff_dim),
                    ff2: Linear::new(format!("{n}.ff2"), spec.ff_dim, d),
                    norm2: LayerNorm::new(format!("{n}.norm2"), d),
                    dropout: spec.dropout,
                }
            })
            .collect();
        Self {
            context,
            dim: d,
            embed: Linear::new(format!("{name}.embed"), frame_len, d),
            blocks,
        }
    }

    /// `[B, T, 2, H, W]` -> tokens `[B, T, D]`.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let s = ctx.shape(seq);
        if s.len() != 5 || s[1] != self.context {
            return Err(Error::Input(format!(
                "linformer expects exactly {} context steps, got shape {s:?}",
                self.context
            )));
        }
        let tok = ctx.g.reshape(seq, &[s[0], s[1], s[2] * s[3] * s[4]])?;
        let mut x = self.embed.forward(ctx, tok)?;
        for b in &self.blocks {
            x = b.forward(ctx, x)?;
        }
        Ok(x)
    }
}

impl Module for LinFormerTrunk {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.embed.specs(out);
        for b in &self.blocks {
            b.specs(out);
        }
    }
}

/// Maps tokens `[B, T, D]` to `[B, rows, H*W*per_row]` by a linear mix over
/// time followed by a per-row linear map over features.
#[derive(Debug, Clone)]
pub struct TokenHead {
    time: TimeLinear,
    feat: Linear,
}

impl TokenHead {
    pub fn new(name: &str, context: usize, rows: usize, dim: usize, out: usize) -> Self {
        Self {
            time: TimeLinear(Linear::new(format!("{name}.time"), context, rows)),
            feat: Linear::new(format!("{name}.feat"), dim, out),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, tok: Var) -> Result<Var> {
        let x = self.time.forward(ctx, tok)?;
        self.feat.forward(ctx, x)
    }
}

impl Module for TokenHead {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.time.0.specs(out);
        self.feat.specs(out);
    }
}

/// LinFormer temporal encoder producing `Z` of shape `[B, latent, H, W]`.
#[derive(Debug, Clone)]
pub struct LinFormerEncoder {
    pub trunk: LinFormerTrunk,
    head: TokenHead,
    latent: usize,
    spatial: (usize, usize),
}

impl LinFormerEncoder {
    pub fn new(name: &str, spec: &EncoderSpec, context: usize, num_tx: usize, num_sc: usize) -> Self {
        let trunk = LinFormerTrunk::new(&format!("{name}.trunk"), spec, context, 2 * num_tx * num_sc);
        Self {
            head: TokenHead::new(
                &format!("{name}.head"),
                context,
                spec.latent_channels,
                trunk.dim,
                num_tx * num_sc,
            ),
            trunk,
            latent: spec.latent_channels,
            spatial: (num_tx, num_sc),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let b = ctx.shape(seq)[0];
        let tok = self.trunk.forward(ctx, seq)?;
        let z = self.head.forward(ctx, tok)?;
        Ok(ctx.g.reshape(z, &[b, self.latent, self.spatial.0, self.spatial.1])?)
    }
}

impl Module for LinFormerEncoder {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.trunk.specs(out);
        self.head.specs(out);
    }
}

/// One GRU layer with the r, z, n gate convention:
/// `n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`, `h' = (1 - z) n + z h`.
#[derive(Debug, Clone)]
pub struct GruLayer {
    pub hidden: usize,
    name: String,
    input: usize,
}

impl GruLayer {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        Self {
            hidden,
            name: name.to_string(),
            input,
        }
    }

    pub fn step<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, h: Var) -> Result<Var> {
        let n = &self.name;
        let hd = self.hidden;
        let (wi, bi) = (ctx.p(&format!("{n}.w_ih"))?, ctx.p(&format!("{n}.b_ih"))?);
        let (wh, bh) = (ctx.p(&format!("{n}.w_hh"))?, ctx.p(&format!("{n}.b_hh"))?);
        let g = &mut ctx.g;
        let gi = g.linear(x, wi, Some(bi))?;
        let gh = g.linear(h, wh, Some(bh))?;
        let part = |g: &mut csipred_autograd::Graph<T>, v: Var, i: usize| g.narrow(v, 1, i * hd, hd);
        let (ir, iz, inn) = (part(g, gi, 0)?, part(g, gi, 1)?, part(g, gi, 2)?);
        let (hr, hz, hn) = (part(g, gh, 0)?, part(g, gh, 1)?, part(g, gh, 2)?);
        let r = g.add(ir, hr)?;
        let r = g.sigmoid(r);
        let z = g.add(iz, hz)?;
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn)?;
        let nn = g.add(inn, rn)?;
        let nn = g.tanh(nn);
        // h' = n + z (h - n)
        let d = g.sub(h, nn)?;
        let zd = g.mul(z, d)?;
        Ok(g.add(nn, zd)?)
    }
}

impl Module for GruLayer {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let (n, h, i) = (&self.name, self.hidden, self.input);
        out.push(ParamSpec::fan_in(format!("{n}.w_ih"), vec![3 * h, i], h));
        out.push(ParamSpec::fan_in(format!("{n}.b_ih"), vec![3 * h], h));
        out.push(ParamSpec::fan_in(format!("{n}.w_hh"), vec![3 * h, h], h));
        out.push(ParamSpec::fan_in(format!("{n}.b_hh"), vec![3 * h], h));
    }
}

/// Stacked GRU over flattened frames; returns the top layer's final hidden state.
#[derive(Debug, Clone)]
pub struct GruStack {
    pub layers: Vec<GruLayer>,
}

impl GruStack {
    pub fn new(name: &str, spec: &EncoderSpec, input: usize) -> Self {
        let layers = (0..spec.num_layers)
            .map(|i| {
                GruLayer::new(
                    &format!("{name}.l{i}"),
                    if i == 0 { input } else { spec.hidden },
                    spec.hidden,
                )
            })
            .collect();
        Self { layers }
    }

    /// `[B, T, F]` -> `[B, hidden]`.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let s = ctx.shape(seq);
        if s.len() != 3 || s[1] == 0 {
            return Err(Error::Input(format!("gru expects [B, T>=1, F], got {s:?}")));
        }
        let mut hs: Vec<Var> = self
            .layers
            .iter()
            .map(|l| ctx.input(Tensor::zeros(vec![s[0], l.hidden])))
            .collect();
        for t in 0..s[1] {
            let x = ctx.g.narrow(seq, 1, t, 1)?;
            let mut x = ctx.g.reshape(x, &[s[0], s[2]])?;
            for (l, h) in self.layers.iter().zip(hs.iter_mut()) {
                *h = l.step(ctx, x, *h)?;
                x = *h;
            }
        }
        Ok(*hs.last().expect("at least one layer"))
    }
}

impl Module for GruStack {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        for l in &self.layers {
            l.specs(out);
        }
    }
}
