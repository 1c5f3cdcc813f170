use std::io::Write;
use std::ops::ControlFlow;

use csipred_autograd::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::batch::{context_batch, target_batch, Geometry};
use super::checkpoint::{rng_digest, Checkpoint};
use super::optim::{clip_grad_norm, ema_decay_at, ema_update, Adam};
use super::TrainConfig;
use crate::chansim::{corrupt_with_snr_mode, DatasetBundle};
use crate::diffusion::{make_cosine_schedule, LossKind, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nets::{Ctx, InferenceMode, Model, ModelSpec};

/// One line of the training metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub lr_encoder: f64,
    pub lr_generator: f64,
    pub snr_db: f64,
    pub t_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<StepMetrics>,
}

/// Dataset geometry check shared by training and inference.
pub fn geometry_for(spec: &ModelSpec, data: &DatasetBundle) -> Result<Geometry> {
    if data.num_tx != spec.num_tx || data.num_sc != spec.num_sc {
        return Err(Error::config(
            "model",
            format!(
                "model expects {}x{} CSI, dataset has {}x{}",
                spec.num_tx, spec.num_sc, data.num_tx, data.num_sc
            ),
        ));
    }
    if data.n_past < spec.n_past {
        return Err(Error::config(
            "model.n_past",
            format!("{} context frames requested, dataset has {}", spec.n_past, data.n_past),
        ));
    }
    Ok(Geometry {
        n_past: data.n_past,
        n_future: data.n_future,
        h: data.num_tx,
        w: data.num_sc,
    })
}

/// Frames the model is trained to emit per example.
fn target_frames(spec: &ModelSpec) -> usize {
    match spec.inference_mode {
        InferenceMode::Ar => 1,
        _ => spec.n_future,
    }
}

pub fn schedule_for(cfg: &TrainConfig) -> Result<NoiseSchedule> {
    make_cosine_schedule(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max)
}

/// Runs the training loop.
///
/// Every batch corrupts the context at an SNR drawn uniformly in dB, draws
/// the diffusion step, noises the target and regresses the clean target
/// (direct baselines regress the target from the corrupted context). The
/// optional `metrics` sink receives one JSON line per step; `on_step` may
/// stop training early.
pub fn train(
    spec: &ModelSpec,
    data: &DatasetBundle,
    cfg: &TrainConfig,
    mut metrics: Option<&mut dyn Write>,
    mut on_step: impl FnMut(&StepMetrics) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = Model::new(spec)?;
    let geo = geometry_for(spec, data)?;
    let frames = target_frames(spec);
    if data.n_future < frames {
        return Err(Error::config(
            "model.n_future",
            format!("{frames} target frames needed, dataset has {}", data.n_future),
        ));
    }
    if data.train.len == 0 {
        return Err(Error::Input("training split is empty".into()));
    }
    if !spec.is_diffusion() && cfg.loss.kind == LossKind::MseOnNoise {
        return Err(Error::config(
            "train.loss.kind",
            "noise-space loss requires a diffusion model",
        ));
    }
    let sched = schedule_for(cfg)?;

    let mut params = model.init_params::<f32>(cfg.seed)?;
    let mut ema = params.clone();
    let mut opt = Adam::new(cfg.lr_encoder, cfg.lr_generator, cfg.adam_betas, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..data.train.len).collect();
    let mut trace = Vec::new();
    let (mut step, mut ema_updates) = (0u64, 0u64);

    'outer: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| step as usize >= m) {
                break 'outer;
            }
            let b = rows.len();
            let x = context_batch(&data.train, geo, rows, spec.n_past)?;
            let y = target_batch(&data.train, geo, rows, frames)?;
            let [lo, hi] = cfg.snr_range_db;
            let snr_db = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let xc = corrupt_with_snr_mode(x.data(), snr_db, cfg.corruption, &mut rng);
            let x = Tensor::new(x.shape().to_vec(), xc)?;

            let ts: Vec<usize> = if cfg.per_sample_t {
                (0..b).map(|_| rng.random_range(0..sched.steps)).collect()
            } else {
                vec![rng.random_range(0..sched.steps); b]
            };
            let dropout_seed: u64 = rng.random();
            let noise: Vec<f32> = if spec.is_diffusion() {
                (0..y.numel())
                    .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                    .collect()
            } else {
                Vec::new()
            };

            let mut ctx = Ctx::train(&params, dropout_seed);
            let xv = ctx.input(x);
            let loss = if spec.is_diffusion() {
                let per = y.numel() / b;
                let mut xt = Vec::with_capacity(y.numel());
                for (i, &t) in ts.iter().enumerate() {
                    let r = i * per..(i + 1) * per;
                    xt.extend(crate::diffusion::forward_diffuse(
                        &y.data()[r.clone()],
                        t,
                        &noise[r],
                        &sched,
                    )?);
                }
                let shape = y.shape().to_vec();
                let xt = Tensor::new(shape.clone(), xt)?;
                let tf: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
                let cond = model.encode(&mut ctx, xv)?;
                let xtv = ctx.input(xt);
                let pred = model.predict_clean(&mut ctx, xtv, cond, &tf)?;
                match cfg.loss.kind {
                    LossKind::HuberOnSample => {
                        let yv = ctx.input(y);
                        ctx.g.huber(pred, yv, cfg.loss.huber_delta)?
                    }
                    LossKind::MseOnSample => {
                        let yv = ctx.input(y);
                        ctx.g.mse(pred, yv)?
                    }
                    LossKind::MseOnNoise => {
                        let eps_hat = implied_noise(&mut ctx, xtv, pred, &ts, &sched)?;
                        let ev = ctx.input(Tensor::new(shape, noise)?);
                        ctx.g.mse(eps_hat, ev)?
                    }
                }
            } else {
                let pred = model.direct(&mut ctx, xv)?;
                let yv = ctx.input(y);
                match cfg.loss.kind {
                    LossKind::MseOnSample => ctx.g.mse(pred, yv)?,
                    _ => ctx.g.huber(pred, yv, cfg.loss.huber_delta)?,
                }
            };
            let loss_val = ctx.value(loss).item()? as f64;
            let t_mean = ts.iter().sum::<usize>() as f64 / b as f64;
            if !loss_val.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss_val} at step {step} (epoch {epoch}, snr {snr_db:.2} dB, mean t {t_mean})"
                )));
            }
            let mut grads = ctx.g.backward(loss)?;
            let mut grads = ctx.param_grads(&mut grads);
            drop(ctx);
            let grad_norm = clip_grad_norm(&mut grads, cfg.grad_clip_norm);
            if !grad_norm.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite gradient norm at step {step} (epoch {epoch})"
                )));
            }
            let clipped_norm = super::optim::global_norm(&grads);
            opt.step(&mut params, &grads)?;
            step += 1;
            if step % cfg.ema_interval as u64 == 0 {
                ema_update(
                    &mut ema,
                    &params,
                    ema_decay_at(cfg.ema_decay, ema_updates, cfg.ema_warmup),
                )?;
                ema_updates += 1;
            }
            let m = StepMetrics {
                step,
                epoch,
                loss: loss_val,
                grad_norm,
                clipped_norm,
                lr_encoder: cfg.lr_encoder,
                lr_generator: cfg.lr_generator,
                snr_db,
                t_mean,
            };
            if let Some(w) = metrics.as_deref_mut() {
                let line = serde_json::to_string(&m).map_err(|e| Error::Input(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| Error::io(std::path::Path::new("<metrics>"), e))?;
            }
            let flow = on_step(&m);
            trace.push(m);
            if flow.is_break() {
                break 'outer;
            }
        }
    }
    if !params.all_finite() {
        return Err(Error::Diverged("non-finite parameters after training".into()));
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            spec: spec.clone(),
            train: cfg.clone(),
            step,
            ema_updates,
            rng_digest: rng_digest(&rng),
            raw: params,
            ema,
        },
        trace,
    })
}

/// `(x_t - sqrt(abar_t) pred) / sqrt(1 - abar_t)` with per-sample steps.
fn implied_noise(ctx: &mut Ctx<f32>, xt: Var, pred: Var, ts: &[usize], sched: &NoiseSchedule) -> Result<Var> {
    let b = ts.len();
    let shape = vec![b, 1, 1, 1, 1];
    let a: Vec<f32> = ts.iter().map(|&t| sched.alpha_bar[t].sqrt() as f32).collect();
    let inv: Vec<f32> = ts
        .iter()
        .map(|&t| (1.0 / (1.0 - sched.alpha_bar[t]).max(1e-12).sqrt()) as f32)
        .collect();
    let a = ctx.input(Tensor::new(shape.clone(), a)?);
    let inv = ctx.input(Tensor::new(shape, inv)?);
    let scaled = ctx.g.mul(pred, a)?;
    let d = ctx.g.sub(xt, scaled)?;
    Ok(ctx.g.mul(d, inv)?)
}
