use csipred_autograd::{Float, Graph, Var};

use super::layers::{Conv2d, LayerNorm, Linear, Module, SelfAttention, TimeEmbedding};
use super::{BackboneSpec, Ctx, Init, ParamSpec};
use crate::error::{Error, Result};

/// `x * (1 + scale) + shift` with `[B, 1, D]` modulation.
fn modulate<T: Float>(g: &mut Graph<T>, x: Var, shift: Var, scale: Var) -> Result<Var> {
    let s1 = g.add_scalar(scale, 1.0);
    let y = g.mul(x, s1)?;
    Ok(g.add(y, shift)?)
}

/// Splits `[B, k*D]` into `k` chunks shaped `[B, 1, D]`.
fn chunks<T: Float>(g: &mut Graph<T>, m: Var, k: usize, d: usize) -> Result<Vec<Var>> {
    let b = g.shape(m)[0];
    (0..k)
        .map(|i| {
            let c = g.narrow(m, 1, i * d, d)?;
            Ok(g.reshape(c, &[b, 1, d])?)
        })
        .collect()
}

#[derive(Debug, Clone)]
struct DitBlock {
    dim: usize,
    modulation: Linear,
    attn: SelfAttention,
    fc1: Linear,
    fc2: Linear,
}

impl DitBlock {
    fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, c: Var) -> Result<Var> {
        let d = self.dim;
        let m = self.modulation.forward(ctx, c)?;
        let parts = chunks(&mut ctx.g, m, 6, d)?;
        let (shift_a, scale_a, gate_a, shift_m, scale_m, gate_m) =
            (parts[0], parts[1], parts[2], parts[3], parts[4], parts[5]);
        let ln = LayerNorm::plain(d);

        let h = ln.forward(ctx, x)?;
        let h = modulate(&mut ctx.g, h, shift_a, scale_a)?;
        let h = self.attn.forward(ctx, h)?;
        let h = ctx.g.mul(h, gate_a)?;
        let x = ctx.g.add(x, h)?;

        let h = ln.forward(ctx, x)?;
        let h = modulate(&mut ctx.g, h, shift_m, scale_m)?;
        let h = self.fc1.forward(ctx, h)?;
        let h = ctx.g.gelu(h);
        let h = self.fc2.forward(ctx, h)?;
        let h = ctx.g.mul(h, gate_m)?;
        Ok(ctx.g.add(x, h)?)
    }
}

impl Module for DitBlock {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.modulation.specs(out);
        self.attn.specs(out);
        self.fc1.specs(out);
        self.fc2.specs(out);
    }
}

/// Diffusion Transformer with adaLN-Zero conditioning.
#[derive(Debug, Clone)]
pub struct Dit {
    pub in_channels: usize,
    pub out_channels: usize,
    patch: usize,
    dim: usize,
    grid: (usize, usize),
    pos_name: String,
    embed: Conv2d,
    time: TimeEmbedding,
    blocks: Vec<DitBlock>,
    final_mod: Linear,
    final_proj: Linear,
}

impl Dit {
    pub fn new(
        name: &str,
        spec: &BackboneSpec,
        in_channels: usize,
        out_channels: usize,
        num_tx: usize,
        num_sc: usize,
    ) -> Result<Self> {
        let p = spec.patch_size;
        if p == 0 || !num_tx.is_multiple_of(p) || !num_sc.is_multiple_of(p) {
            return Err(Error::config(
                "model.backbone.patch_size",
                format!("{p} does not tile {num_tx}x{num_sc}"),
            ));
        }
        let d = spec.hidden_dim;
        let mlp = ((d as f64) * spec.mlp_ratio).round() as usize;
        let blocks = (0..spec.depth)
            .map(|i| {
                let n = format!("{name}.block{i}");
                Ok(DitBlock {
                    dim: d,
                    modulation: Linear::zeroed(format!("{n}.adaln"), d, 6 * d),
                    attn: SelfAttention::new(&format!("{n}.attn"), d, spec.heads)?,
                    fc1: Linear::new(format!("{n}.fc1"), d, mlp),
                    fc2: Linear::new(format!("{n}.fc2"), mlp, d),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            in_channels,
            out_channels,
            patch: p,
            dim: d,
            grid: (num_tx / p, num_sc / p),
            pos_name: format!("{name}.pos_embed"),
            embed: Conv2d {
                name: format!("{name}.patch_embed"),
                cin: in_channels,
                cout: d,
                k: p,
                stride: p,
                pad: 0,
            },
            time: TimeEmbedding::new(&format!("{name}.time"), spec.time_freq_dim, d),
            blocks,
            final_mod: Linear::zeroed(format!("{name}.final.adaln"), d, 2 * d),
            final_proj: Linear::zeroed(format!("{name}.final.proj"), d, p * p * out_channels),
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var, ts: &[f64]) -> Result<Var> {
        let s = ctx.shape(x);
        let (gh, gw) = self.grid;
        let p = self.patch;
        if s.len() != 4 || s[1] != self.in_channels || s[2] != gh * p || s[3] != gw * p {
            return Err(Error::Input(format!(
                "dit expects [B, {}, {}, {}], got {s:?}",
                self.in_channels,
                gh * p,
                gw * p
            )));
        }
        let (b, d, n) = (s[0], self.dim, gh * gw);
        let tok = self.embed.forward(ctx, x)?;
        let tok = ctx.g.reshape(tok, &[b, d, n])?;
        let tok = ctx.g.transpose(tok, 1, 2)?;
        let pos = ctx.p(&self.pos_name)?;
        let mut h = ctx.g.add(tok, pos)?;

        let c = self.time.forward(ctx, ts)?;
        let c = ctx.g.silu(c);
        for blk in &self.blocks {
            h = blk.forward(ctx, h, c)?;
        }
        let m = self.final_mod.forward(ctx, c)?;
        let parts = chunks(&mut ctx.g, m, 2, d)?;
        h = LayerNorm::plain(d).forward(ctx, h)?;
        h = modulate(&mut ctx.g, h, parts[0], parts[1])?;
        h = self.final_proj.forward(ctx, h)?;
        self.unpatchify(ctx, h, b)
    }

    /// `[B, N, P*P*C]` tokens back to `[B, C, H, W]`.
    pub fn unpatchify<T: Float>(&self, ctx: &mut Ctx<T>, h: Var, b: usize) -> Result<Var> {
        let (gh, gw) = self.grid;
        let (p, c) = (self.patch, self.out_channels);
        let g = &mut ctx.g;
        let h = g.reshape(h, &[b, gh, gw, p, p, c])?;
        let h = g.permute(h, &[0, 5, 1, 3, 2, 4])?;
        Ok(g.reshape(h, &[b, c, gh * p, gw * p])?)
    }
}

impl Module for Dit {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.embed.specs(out);
        out.push(ParamSpec::new(
            self.pos_name.clone(),
            vec![self.num_tokens(), self.dim],
            Init::Uniform(0.02),
        ));
        self.time.specs(out);
        for b in &self.blocks {
            b.specs(out);
        }
        self.final_mod.specs(out);
        self.final_proj.specs(out);
    }
}
