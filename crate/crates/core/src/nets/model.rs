use csipred_autograd::{Float, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baselines::{ConvLstmForecaster, GruForecaster, LinFormerForecaster};
use super::encoders::{ConvLstmEncoder, LinFormerEncoder};
use super::layers::Module;
use super::unet3d::UNet3d;
use super::{BackboneKind, BackboneSpec, Ctx, Dit, EncoderKind, EncoderSpec, ParamBundle, ParamSpec, UNet2d};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "DiU")]
    Diu,
    #[serde(rename = "DiU-seq2seq")]
    DiuSeq2seq,
    #[serde(rename = "LinFusion")]
    LinFusion,
    #[serde(rename = "DiT")]
    Dit,
    #[serde(rename = "DiU3")]
    Diu3,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "ConvLSTM")]
    ConvLstm,
    #[serde(rename = "LinFormer")]
    LinFormer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Diu,
        ModelKind::DiuSeq2seq,
        ModelKind::LinFusion,
        ModelKind::Dit,
        ModelKind::Diu3,
        ModelKind::Gru,
        ModelKind::ConvLstm,
        ModelKind::LinFormer,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Diu => "DiU",
            ModelKind::DiuSeq2seq => "DiU-seq2seq",
            ModelKind::LinFusion => "LinFusion",
            ModelKind::Dit => "DiT",
            ModelKind::Diu3 => "DiU3",
            ModelKind::Gru => "GRU",
            ModelKind::ConvLstm => "ConvLSTM",
            ModelKind::LinFormer => "LinFormer",
        }
    }

    pub fn inference_mode(self) -> InferenceMode {
        match self {
            ModelKind::Diu | ModelKind::Dit => InferenceMode::Ar,
            ModelKind::DiuSeq2seq | ModelKind::LinFusion | ModelKind::Diu3 => InferenceMode::Seq2seq,
            ModelKind::Gru | ModelKind::ConvLstm | ModelKind::LinFormer => InferenceMode::Direct,
        }
    }

    fn encoder_kind(self) -> EncoderKind {
        match self {
            ModelKind::Diu | ModelKind::Dit | ModelKind::ConvLstm => EncoderKind::Convlstm,
            ModelKind::LinFusion | ModelKind::LinFormer => EncoderKind::Linformer,
            ModelKind::Gru => EncoderKind::Gru,
            ModelKind::DiuSeq2seq | ModelKind::Diu3 => EncoderKind::None,
        }
    }

    fn backbone_kind(self) -> Option<BackboneKind> {
        match self {
            ModelKind::Diu | ModelKind::DiuSeq2seq | ModelKind::LinFusion => Some(BackboneKind::Unet2d),
            ModelKind::Dit => Some(BackboneKind::Dit),
            ModelKind::Diu3 => Some(BackboneKind::Unet3d),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("model.name", format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Ar,
    Seq2seq,
    Direct,
}

/// Declarative description of one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelKind,
    pub encoder: EncoderSpec,
    pub backbone: Option<BackboneSpec>,
    pub inference_mode: InferenceMode,
    pub n_past: usize,
    pub n_future: usize,
    pub num_tx: usize,
    pub num_sc: usize,
}

impl ModelSpec {
    /// Full-size widths.
    pub fn paper(kind: ModelKind, n_past: usize, n_future: usize, num_tx: usize, num_sc: usize) -> Self {
        let mut encoder = EncoderSpec {
            kind: kind.encoder_kind(),
            ..EncoderSpec::default()
        };
        match kind {
            ModelKind::LinFusion | ModelKind::LinFormer => {
                encoder.hidden = 512;
                encoder.ff_dim = 512;
                encoder.num_layers = 6;
                encoder.dropout = 0.1;
            }
            ModelKind::Gru => {
                encoder.hidden = 128;
                encoder.num_layers = 2;
            }
            ModelKind::ConvLstm => encoder.dropout = 0.2,
            _ => {}
        }
        let backbone = kind.backbone_kind().map(|b| match b {
            BackboneKind::Unet2d => BackboneSpec::unet2d(),
            BackboneKind::Dit => BackboneSpec::dit(),
            BackboneKind::Unet3d => BackboneSpec::unet3d(),
        });
        Self {
            name: kind,
            encoder,
            backbone,
            inference_mode: kind.inference_mode(),
            n_past,
            n_future,
            num_tx,
            num_sc,
        }
    }

    /// Width-reduced variant for single-machine experiments.
    pub fn desk(kind: ModelKind, n_past: usize, n_future: usize, num_tx: usize, num_sc: usize) -> Self {
        let mut s = Self::paper(kind, n_past, n_future, num_tx, num_sc);
        match kind {
            ModelKind::LinFusion | ModelKind::LinFormer => {
                s.encoder.hidden = 128;
                s.encoder.ff_dim = 128;
                s.encoder.num_layers = 2;
            }
            ModelKind::Gru => {}
            _ => s.encoder.hidden = 16,
        }
        s.encoder.latent_channels = 16;
        if let Some(b) = &mut s.backbone {
            b.base_channels = 16;
            b.time_embed_dim = 64;
            b.time_freq_dim = 64;
            b.hidden_dim = 64;
            b.depth = 4;
            b.heads = 4;
            if b.kind == BackboneKind::Unet3d {
                b.base_channels = 8;
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.name;
        if self.n_past == 0 || self.n_future == 0 || self.num_tx == 0 || self.num_sc == 0 {
            return Err(Error::config(
                "model",
                "n_past, n_future, num_tx and num_sc must be at least 1",
            ));
        }
        if self.inference_mode != k.inference_mode() {
            return Err(Error::config(
                "model.inference_mode",
                format!("{k} requires {:?}, got {:?}", k.inference_mode(), self.inference_mode),
            ));
        }
        if self.encoder.kind != k.encoder_kind() {
            return Err(Error::config(
                "model.encoder.kind",
                format!("{k} requires {:?}, got {:?}", k.encoder_kind(), self.encoder.kind),
            ));
        }
        self.encoder.validate()?;
        match (k.backbone_kind(), &self.backbone) {
            (None, None) => {}
            (Some(want), Some(b)) if b.kind == want => b.validate(self.num_tx, self.num_sc)?,
            (want, got) => {
                return Err(Error::config(
                    "model.backbone",
                    format!("{k} requires {want:?}, got {:?}", got.as_ref().map(|b| b.kind)),
                ))
            }
        }
        Ok(())
    }

    /// Frames produced per backbone pass.
    pub fn frames_per_pass(&self) -> usize {
        match self.inference_mode {
            InferenceMode::Ar => 1,
            _ => self.n_future,
        }
    }

    pub fn is_diffusion(&self) -> bool {
        self.backbone.is_some()
    }
}

#[derive(Debug, Clone)]
enum Encoder {
    ConvLstm(ConvLstmEncoder),
    LinFormer(LinFormerEncoder),
    None,
}

#[derive(Debug, Clone)]
enum Backbone {
    Unet2d(UNet2d),
    Dit(Dit),
    Unet3d(UNet3d),
}

#[derive(Debug, Clone)]
enum DirectNet {
    Gru(GruForecaster),
    ConvLstm(ConvLstmForecaster),
    LinFormer(LinFormerForecaster),
}

/// Instantiated architecture for a [`ModelSpec`]. Parameters live in a
/// separate [`ParamBundle`]; names are prefixed `enc.`, `gen.` or `net.`.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    encoder: Encoder,
    backbone: Option<Backbone>,
    direct: Option<DirectNet>,
}

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (np, nf, nt, nc) = (spec.n_past, spec.n_future, spec.num_tx, spec.num_sc);
        let es = &spec.encoder;
        let mut model = Self {
            spec: spec.clone(),
            encoder: Encoder::None,
            backbone: None,
            direct: None,
        };
        match spec.inference_mode {
            InferenceMode::Direct => {
                model.direct = Some(match spec.name {
                    ModelKind::Gru => DirectNet::Gru(GruForecaster::new("net", es, nf, nt, nc)),
                    ModelKind::ConvLstm => DirectNet::ConvLstm(ConvLstmForecaster::new("net", es, nf)),
                    _ => DirectNet::LinFormer(LinFormerForecaster::new("net", es, np, nf, nt, nc)),
                });
            }
            _ => {
                model.encoder = match es.kind {
                    EncoderKind::Convlstm => Encoder::ConvLstm(ConvLstmEncoder::new("enc", es)),
                    EncoderKind::Linformer => Encoder::LinFormer(LinFormerEncoder::new("enc", es, np, nt, nc)),
                    _ => Encoder::None,
                };
                let m = spec.frames_per_pass();
                let b = spec.backbone.as_ref().expect("validated");
                let cond = match spec.name {
                    ModelKind::DiuSeq2seq => 2 * np,
                    ModelKind::Diu3 => 0,
                    _ => es.latent_channels,
                };
                model.backbone = Some(match b.kind {
                    BackboneKind::Unet2d => Backbone::Unet2d(UNet2d::new("gen", b, 2 * m + cond, 2 * m)?),
                    BackboneKind::Dit => Backbone::Dit(Dit::new("gen", b, 2 * m + cond, 2 * m, nt, nc)?),
                    BackboneKind::Unet3d => Backbone::Unet3d(UNet3d::new("gen", b, 3, 2)?),
                });
            }
        }
        Ok(model)
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        match &self.encoder {
            Encoder::ConvLstm(e) => e.specs(&mut out),
            Encoder::LinFormer(e) => e.specs(&mut out),
            Encoder::None => {}
        }
        match &self.backbone {
            Some(Backbone::Unet2d(b)) => b.specs(&mut out),
            Some(Backbone::Dit(b)) => b.specs(&mut out),
            Some(Backbone::Unet3d(b)) => b.specs(&mut out),
            None => {}
        }
        match &self.direct {
            Some(DirectNet::Gru(n)) => n.specs(&mut out),
            Some(DirectNet::ConvLstm(n)) => n.specs(&mut out),
            Some(DirectNet::LinFormer(n)) => n.specs(&mut out),
            None => {}
        }
        out
    }

    pub fn init_params<T: Float>(&self, seed: u64) -> Result<ParamBundle<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParamBundle::init(&self.param_specs(), &mut rng)
    }

    pub fn has_encoder(&self) -> bool {
        !matches!(self.encoder, Encoder::None)
    }

    pub fn convlstm_encoder(&self) -> Option<&ConvLstmEncoder> {
        match &self.encoder {
            Encoder::ConvLstm(e) => Some(e),
            _ => None,
        }
    }

    /// Conditioning for the backbone: `Z` `[B, L, H, W]` for encoder models,
    /// otherwise the (corrupted) context `[B, N_p, 2, H, W]` itself.
    pub fn encode<T: Float>(&self, ctx: &mut Ctx<T>, context: Var) -> Result<Var> {
        match &self.encoder {
            Encoder::ConvLstm(e) => e.forward(ctx, context),
            Encoder::LinFormer(e) => e.forward(ctx, context),
            Encoder::None => {
                let s = ctx.shape(context);
                if s.len() != 5 || s[1] != self.spec.n_past {
                    return Err(Error::Input(format!(
                        "{} needs exactly {} context frames, got shape {s:?}",
                        self.spec.name, self.spec.n_past
                    )));
                }
                Ok(context)
            }
        }
    }

    /// Predicts the clean frames `[B, M, 2, H, W]` from noisy frames `x_t`
    /// of the same shape, conditioning `cond` from [`Model::encode`], and
    /// per-sample diffusion steps `ts`.
    pub fn predict_clean<T: Float>(&self, ctx: &mut Ctx<T>, x_t: Var, cond: Var, ts: &[f64]) -> Result<Var> {
        let s = ctx.shape(x_t);
        let m = self.spec.frames_per_pass();
        if s.len() != 5 || s[1] != m || s[2] != 2 || s[3] != self.spec.num_tx || s[4] != self.spec.num_sc {
            return Err(Error::Input(format!(
                "noisy frames must be [B, {m}, 2, {}, {}], got {s:?}",
                self.spec.num_tx, self.spec.num_sc
            )));
        }
        if ts.len() != s[0] {
            return Err(Error::Input(format!("{} timesteps for batch {}", ts.len(), s[0])));
        }
        let (b, h, w) = (s[0], s[3], s[4]);
        let backbone = self.backbone.as_ref().ok_or_else(|| {
            Error::config(
                "model.backbone",
                format!("{} has no diffusion backbone", self.spec.name),
            )
        })?;
        if let Backbone::Unet3d(net) = backbone {
            let v = UNet3d::stack_input(ctx, cond, x_t)?;
            let out = net.forward(ctx, v, ts)?;
            let out = ctx.g.narrow(out, 2, self.spec.n_past, m)?;
            return Ok(ctx.g.permute(out, &[0, 2, 1, 3, 4])?);
        }
        let xs = ctx.g.reshape(x_t, &[b, 2 * m, h, w])?;
        let cs = ctx.shape(cond);
        let cond = if cs.len() == 5 {
            ctx.g.reshape(cond, &[b, cs[1] * cs[2], h, w])?
        } else {
            cond
        };
        let input = ctx.g.cat(&[xs, cond], 1)?;
        let out = match backbone {
            Backbone::Unet2d(net) => net.forward(ctx, input, ts)?,
            Backbone::Dit(net) => net.forward(ctx, input, ts)?,
            Backbone::Unet3d(_) => unreachable!(),
        };
        Ok(ctx.g.reshape(out, &[b, m, 2, h, w])?)
    }

    /// Baseline forward: `[B, N_p, 2, H, W]` to `[B, N_f, 2, H, W]`.
    pub fn direct<T: Float>(&self, ctx: &mut Ctx<T>, context: Var) -> Result<Var> {
        let s = ctx.shape(context);
        if s.len() != 5 || s[2] != 2 || s[3] != self.spec.num_tx || s[4] != self.spec.num_sc || s[1] == 0 {
            return Err(Error::Input(format!(
                "context must be [B, T, 2, {}, {}], got {s:?}",
                self.spec.num_tx, self.spec.num_sc
            )));
        }
        match &self.direct {
            Some(DirectNet::Gru(n)) => n.forward(ctx, context),
            Some(DirectNet::ConvLstm(n)) => n.forward(ctx, context),
            Some(DirectNet::LinFormer(n)) => n.forward(ctx, context),
            None => Err(Error::config(
                "model.inference_mode",
                format!("{} is not a direct model", self.spec.name),
            )),
        }
    }
}
