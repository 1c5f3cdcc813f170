use csipred_autograd::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

use super::checkpoint::Checkpoint;
use super::config::{FeedbackNoise, InferConfig};
use super::train::schedule_for;
use crate::chansim::CorruptionMode;
use crate::diffusion::{ddim_step, make_substeps, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nets::{Ctx, InferenceMode, LstmState, Model, ParamBundle};

/// Work done by one inference call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferStats {
    pub backbone_passes: usize,
    pub encoder_passes: usize,
}

/// A frozen model ready for inference (EMA weights by default).
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub model: Model,
    pub params: ParamBundle<f32>,
    pub sched: NoiseSchedule,
}

fn normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// `[B, T, ...]` frames `[start, start + len)`.
fn frames(t: &Tensor<f32>, start: usize, len: usize) -> Result<Tensor<f32>> {
    Ok(t.narrow(1, start, len)?)
}

impl Forecaster {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Self::with_params(ckpt, true)
    }

    pub fn with_params(ckpt: &Checkpoint, use_ema: bool) -> Result<Self> {
        let model = Model::new(&ckpt.spec)?;
        let params = if use_ema { ckpt.ema.clone() } else { ckpt.raw.clone() };
        let declared = model.param_specs().len();
        if declared != params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, model declares {declared}",
                params.len()
            )));
        }
        Ok(Self {
            model,
            params,
            sched: schedule_for(&ckpt.train)?,
        })
    }

    pub fn mode(&self) -> InferenceMode {
        self.model.spec.inference_mode
    }

    /// Dispatches on the model's inference mode. `context` is the already
    /// corrupted history `[B, T, 2, H, W]`; the result holds `horizon` frames.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        context: &Tensor<f32>,
        horizon: usize,
        icfg: &InferConfig,
        rng: &mut R,
    ) -> Result<(Tensor<f32>, InferStats)> {
        match self.mode() {
            InferenceMode::Ar => infer_ar(self, context, horizon, icfg, rng),
            InferenceMode::Seq2seq => infer_seq2seq(self, context, horizon, icfg, rng),
            InferenceMode::Direct => infer_direct(self, context, horizon, icfg, rng),
        }
    }

    fn check_context(&self, context: &Tensor<f32>) -> Result<()> {
        let s = context.shape();
        let spec = &self.model.spec;
        if s.len() != 5 || s[0] == 0 || s[1] == 0 || s[2] != 2 || s[3] != spec.num_tx || s[4] != spec.num_sc {
            return Err(Error::Input(format!(
                "context must be [B>=1, T>=1, 2, {}, {}], got {s:?}",
                spec.num_tx, spec.num_sc
            )));
        }
        Ok(())
    }

    /// Runs the DDIM substeps from a fresh standard-normal draw and returns
    /// the final clean estimate `[B, M, 2, H, W]`.
    fn sample<R: Rng + ?Sized>(
        &self,
        cond: &Tensor<f32>,
        b: usize,
        icfg: &InferConfig,
        rng: &mut R,
        stats: &mut InferStats,
    ) -> Result<Tensor<f32>> {
        let spec = &self.model.spec;
        let shape = vec![b, spec.frames_per_pass(), 2, spec.num_tx, spec.num_sc];
        let n: usize = shape.iter().product();
        let mut h = normal(n, rng);
        let sampler = icfg.sampler();
        let mut h0 = Vec::new();
        for (t, t_prev) in make_substeps(self.sched.steps, sampler.num_sample_steps)? {
            let mut ctx = Ctx::eval(&self.params);
            let c = ctx.input(cond.clone());
            let x = ctx.input(Tensor::new(shape.clone(), h.clone())?);
            let pred = self.model.predict_clean(&mut ctx, x, c, &vec![t as f64; b])?;
            h0 = ctx.value(pred).data().to_vec();
            stats.backbone_passes += 1;
            h = ddim_step(&h, &h0, t, t_prev, &sampler, &self.sched, rng)?;
        }
        Ok(Tensor::new(shape, h0)?)
    }

    fn condition(&self, context: &Tensor<f32>, stats: &mut InferStats) -> Result<Tensor<f32>> {
        let mut ctx = Ctx::eval(&self.params);
        let c = ctx.input(context.clone());
        let z = self.model.encode(&mut ctx, c)?;
        if self.model.has_encoder() {
            stats.encoder_passes += 1;
        }
        Ok(ctx.value(z).clone())
    }
}

/// Prediction as it re-enters the context: `g (H + sigma N)`, where `g` is
/// `sqrt(rho)` under literal corruption with a known SNR and 1 otherwise.
pub fn feedback_frames<R: Rng + ?Sized>(pred: &Tensor<f32>, icfg: &InferConfig, rng: &mut R) -> Result<Tensor<f32>> {
    let b = pred.shape()[0];
    let per = pred.numel() / b.max(1);
    let rho = icfg.inference_snr_db.map(|s| 10f64.powf(s / 10.0));
    let gain = match (icfg.corruption, rho) {
        (CorruptionMode::Literal, Some(r)) => r.sqrt(),
        _ => 1.0,
    };
    let mut out = Vec::with_capacity(pred.numel());
    for row in pred.data().chunks(per) {
        let sigma = match (icfg.feedback_noise, rho) {
            (FeedbackNoise::Sigma(s), _) => s,
            (FeedbackNoise::FromSnr, Some(r)) => {
                let p = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / per as f64;
                (p / r).sqrt()
            }
            (FeedbackNoise::FromSnr, None) => 0.0,
        };
        for &v in row {
            let noise = if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            out.push((gain * (v as f64 + noise)) as f32);
        }
    }
    Ok(Tensor::new(pred.shape().to_vec(), out)?)
}

/// Autoregressive inference: one conditional sampling run per future frame,
/// each prediction fed back into the context. Any context length works.
pub fn infer_ar<R: Rng + ?Sized>(
    f: &Forecaster,
    context: &Tensor<f32>,
    horizon: usize,
    icfg: &InferConfig,
    rng: &mut R,
) -> Result<(Tensor<f32>, InferStats)> {
    f.check_context(context)?;
    icfg.validate(f.sched.steps)?;
    if f.mode() != InferenceMode::Ar || !f.model.has_encoder() {
        return Err(Error::config(
            "infer.mode",
            format!("{} is not an encoder-based autoregressive model", f.model.spec.name),
        ));
    }
    let b = context.shape()[0];
    let mut stats = InferStats::default();
    let mut preds = Vec::with_capacity(horizon);

    if let Some(enc) = f.model.convlstm_encoder() {
        // The recurrence is carried forward frame by frame, which equals
        // re-encoding the grown context from scratch.
        let mut state: Option<(Tensor<f32>, Tensor<f32>)> = None;
        let mut pending = context.clone();
        for _ in 0..horizon {
            let (z, st) = {
                let mut ctx = Ctx::eval(&f.params);
                let seq = ctx.input(pending.clone());
                let init = state.as_ref().map(|(h, c)| LstmState {
                    h: ctx.input(h.clone()),
                    c: ctx.input(c.clone()),
                });
                let st = enc.advance(&mut ctx, seq, init)?;
                let z = enc.project(&mut ctx, st)?;
                (ctx.value(z).clone(), (ctx.value(st.h).clone(), ctx.value(st.c).clone()))
            };
            stats.encoder_passes += 1;
            state = Some(st);
            let pred = f.sample(&z, b, icfg, rng, &mut stats)?;
            pending = feedback_frames(&pred, icfg, rng)?;
            preds.push(pred);
        }
    } else {
        let mut hist = context.clone();
        for _ in 0..horizon {
            let z = f.condition(&hist, &mut stats)?;
            let pred = f.sample(&z, b, icfg, rng, &mut stats)?;
            let fb = feedback_frames(&pred, icfg, rng)?;
            hist = Tensor::cat(&[&hist, &fb], 1)?;
            preds.push(pred);
        }
    }
    let refs: Vec<&Tensor<f32>> = preds.iter().collect();
    Ok((Tensor::cat(&refs, 1)?, stats))
}

/// Joint prediction of `N_f` frames per sampling run. Horizons beyond `N_f`
/// re-window the context over the fed-back predictions and repeat.
pub fn infer_seq2seq<R: Rng + ?Sized>(
    f: &Forecaster,
    context: &Tensor<f32>,
    horizon: usize,
    icfg: &InferConfig,
    rng: &mut R,
) -> Result<(Tensor<f32>, InferStats)> {
    f.check_context(context)?;
    icfg.validate(f.sched.steps)?;
    if f.mode() != InferenceMode::Seq2seq {
        return Err(Error::config(
            "infer.mode",
            format!("{} is not a seq2seq model", f.model.spec.name),
        ));
    }
    let np = f.model.spec.n_past;
    if context.shape()[1] != np {
        return Err(Error::Input(format!(
            "seq2seq model needs exactly {np} context frames, got {}",
            context.shape()[1]
        )));
    }
    let b = context.shape()[0];
    let mut stats = InferStats::default();
    windowed(context, horizon, np, icfg, rng, |window, rng| {
        let z = f.condition(window, &mut stats)?;
        f.sample(&z, b, icfg, rng, &mut stats)
    })
    .map(|y| (y, stats))
}

/// Single deterministic forward of a direct baseline, re-windowed when the
/// horizon exceeds its output length.
pub fn infer_direct<R: Rng + ?Sized>(
    f: &Forecaster,
    context: &Tensor<f32>,
    horizon: usize,
    icfg: &InferConfig,
    rng: &mut R,
) -> Result<(Tensor<f32>, InferStats)> {
    f.check_context(context)?;
    if f.mode() != InferenceMode::Direct {
        return Err(Error::config(
            "infer.mode",
            format!("{} is not a direct model", f.model.spec.name),
        ));
    }
    let np = f.model.spec.n_past;
    let t = context.shape()[1];
    let context = if t > np {
        frames(context, t - np, np)?
    } else {
        context.clone()
    };
    let mut stats = InferStats::default();
    let window_len = context.shape()[1];
    windowed(&context, horizon, window_len, icfg, rng, |window, _| {
        let mut ctx = Ctx::eval(&f.params);
        let c = ctx.input(window.clone());
        let y = f.model.direct(&mut ctx, c)?;
        stats.backbone_passes += 1;
        Ok(ctx.value(y).clone())
    })
    .map(|y| (y, stats))
}

fn windowed<R: Rng + ?Sized>(
    context: &Tensor<f32>,
    horizon: usize,
    window_len: usize,
    icfg: &InferConfig,
    rng: &mut R,
    mut run: impl FnMut(&Tensor<f32>, &mut R) -> Result<Tensor<f32>>,
) -> Result<Tensor<f32>> {
    if horizon == 0 {
        return Err(Error::Input("horizon must be at least 1".into()));
    }
    let mut window = context.clone();
    let mut out: Vec<Tensor<f32>> = Vec::new();
    let mut produced = 0;
    loop {
        let pred = run(&window, rng)?;
        let m = pred.shape()[1];
        let keep = m.min(horizon - produced);
        out.push(frames(&pred, 0, keep)?);
        produced += keep;
        if produced >= horizon {
            break;
        }
        let fb = feedback_frames(&pred, icfg, rng)?;
        let grown = Tensor::cat(&[&window, &fb], 1)?;
        let total = grown.shape()[1];
        window = frames(&grown, total - window_len, window_len)?;
    }
    let refs: Vec<&Tensor<f32>> = out.iter().collect();
    Ok(Tensor::cat(&refs, 1)?)
}
