//! Direct (non-diffusion) forecasters. Each maps a context `[B, N_p, 2, H, W]`
//! to `[B, N_f, 2, H, W]` in a single deterministic pass.

use csipred_autograd::{Float, Var};

use super::encoders::{frame, ConvLstmCell, GruStack, LinFormerTrunk, TokenHead};
use super::layers::{Conv2d, GroupNorm, Linear, Module};
use super::{Ctx, EncoderSpec, ParamSpec};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GruForecaster {
    gru: GruStack,
    out: Linear,
    n_future: usize,
    spatial: (usize, usize),
}

impl GruForecaster {
    pub fn new(name: &str, spec: &EncoderSpec, n_future: usize, num_tx: usize, num_sc: usize) -> Self {
        let frame_len = 2 * num_tx * num_sc;
        Self {
            gru: GruStack::new(&format!("{name}.gru"), spec, frame_len),
            out: Linear::new(format!("{name}.out"), spec.hidden, n_future * frame_len),
            n_future,
            spatial: (num_tx, num_sc),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let s = ctx.shape(seq);
        let (b, (h, w)) = (s[0], self.spatial);
        let flat = ctx.g.reshape(seq, &[b, s[1], s[2..].iter().product()])?;
        let last = self.gru.forward(ctx, flat)?;
        let y = self.out.forward(ctx, last)?;
        Ok(ctx.g.reshape(y, &[b, self.n_future, 2, h, w])?)
    }
}

impl Module for GruForecaster {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.gru.specs(out);
        self.out.specs(out);
    }
}

/// Single-layer ConvLSTM whose head output is fed back as the next input.
#[derive(Debug, Clone)]
pub struct ConvLstmForecaster {
    cell: ConvLstmCell,
    norm: GroupNorm,
    conv: Conv2d,
    dropout: f64,
    n_future: usize,
}

impl ConvLstmForecaster {
    pub fn new(name: &str, spec: &EncoderSpec, n_future: usize) -> Self {
        Self {
            cell: ConvLstmCell::new(&format!("{name}.cell"), 2, spec.hidden),
            norm: GroupNorm::with_groups(format!("{name}.head.norm"), 1, spec.hidden),
            conv: Conv2d::same(format!("{name}.head.conv"), spec.hidden, 2, 3),
            dropout: spec.dropout,
            n_future,
        }
    }

    fn head<T: Float>(&self, ctx: &mut Ctx<T>, h: Var) -> Result<Var> {
        let y = self.norm.forward(ctx, h)?;
        let y = ctx.dropout(y, self.dropout)?;
        let y = self.conv.forward(ctx, y)?;
        Ok(ctx.g.tanh(y))
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let s = ctx.shape(seq);
        let mut st = self.cell.zero_state(ctx, s[0], s[3], s[4]);
        for t in 0..s[1] {
            let x = frame(ctx, seq, t)?;
            st = self.cell.step(ctx, x, st)?;
        }
        let mut outs = Vec::with_capacity(self.n_future);
        for k in 0..self.n_future {
            if k > 0 {
                st = self.cell.step(ctx, outs[k - 1], st)?;
            }
            outs.push(self.head(ctx, st.h)?);
        }
        let y = ctx.g.cat(&outs, 1)?;
        Ok(ctx.g.reshape(y, &[s[0], self.n_future, 2, s[3], s[4]])?)
    }
}

impl Module for ConvLstmForecaster {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.cell.specs(out);
        self.norm.specs(out);
        self.conv.specs(out);
    }
}

#[derive(Debug, Clone)]
pub struct LinFormerForecaster {
    trunk: LinFormerTrunk,
    head: TokenHead,
    n_future: usize,
    spatial: (usize, usize),
}

impl LinFormerForecaster {
    pub fn new(name: &str, spec: &EncoderSpec, n_past: usize, n_future: usize, num_tx: usize, num_sc: usize) -> Self {
        let frame_len = 2 * num_tx * num_sc;
        let trunk = LinFormerTrunk::new(&format!("{name}.trunk"), spec, n_past, frame_len);
        Self {
            head: TokenHead::new(&format!("{name}.head"), n_past, n_future, trunk.dim, frame_len),
            trunk,
            n_future,
            spatial: (num_tx, num_sc),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, seq: Var) -> Result<Var> {
        let b = ctx.shape(seq)[0];
        let tok = self.trunk.forward(ctx, seq)?;
        let y = self.head.forward(ctx, tok)?;
        Ok(ctx
            .g
            .reshape(y, &[b, self.n_future, 2, self.spatial.0, self.spatial.1])?)
    }
}

impl Module for LinFormerForecaster {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.trunk.specs(out);
        self.head.specs(out);
    }
}
