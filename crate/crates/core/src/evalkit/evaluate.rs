use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::predictor::{dataset_digest, json_digest, ModelPredictor, Predictor};
use super::table::{PredStep, ResultRow, ResultTable, TableProvenance};
use crate::chansim::{
    build_eval_split, corrupt_with_snr_mode, CdlProfile, ChannelConfig, DatasetBundle, MinMaxScaler, Split,
};
use crate::diffusion::{nmse_ratios, ratio_to_db};
use crate::error::{Error, Result};
use crate::nets::InferenceMode;
use crate::pipeline::{context_batch, target_batch, Geometry, InferConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub snr_grid_db: Vec<f64>,
    pub velocities_kmh: Vec<f64>,
    pub context_lengths: Vec<usize>,
    pub sampling_steps_grid: Vec<usize>,
    pub horizon: usize,
    /// Upper bound on evaluated test samples (the split may hold fewer).
    pub num_test_samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: (-4..=4).map(|k| 5.0 * k as f64).collect(),
            velocities_kmh: vec![30.0, 60.0, 120.0],
            context_lengths: vec![5, 10, 20, 30, 40],
            sampling_steps_grid: vec![2, 3, 4, 5, 10, 100],
            horizon: 10,
            num_test_samples: 1000,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let grids = [
            ("eval.snr_grid_db", self.snr_grid_db.is_empty()),
            ("eval.velocities_kmh", self.velocities_kmh.is_empty()),
            ("eval.context_lengths", self.context_lengths.is_empty()),
            ("eval.sampling_steps_grid", self.sampling_steps_grid.is_empty()),
        ];
        if let Some((path, _)) = grids.iter().find(|(_, empty)| *empty) {
            return Err(Error::config(*path, "grid must not be empty"));
        }
        if self
            .snr_grid_db
            .iter()
            .chain(&self.velocities_kmh)
            .any(|v| !v.is_finite())
        {
            return Err(Error::config("eval", "grid values must be finite"));
        }
        if self.velocities_kmh.iter().any(|&v| v < 0.0) {
            return Err(Error::config("eval.velocities_kmh", "velocities must be non-negative"));
        }
        if self.context_lengths.contains(&0) || self.sampling_steps_grid.contains(&0) {
            return Err(Error::config("eval", "context lengths and sampling steps must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("eval.horizon", "must be >= 1"));
        }
        if self.num_test_samples == 0 {
            return Err(Error::config("eval.num_test_samples", "must be >= 1"));
        }
        Ok(())
    }
}

/// Where evaluation rows come from, beyond the predictor itself.
struct SplitView<'a> {
    split: &'a Split,
    geometry: Geometry,
    scaler: &'a MinMaxScaler,
    velocity: Option<f64>,
}

fn check_predictor(pred: &dyn Predictor, view: &SplitView, ecfg: &EvalConfig) -> Result<()> {
    let g = view.geometry;
    if let Some((nt, nc)) = pred.frame_shape() {
        if (nt, nc) != (g.h, g.w) {
            return Err(Error::config(
                "model",
                format!("model expects {nt}x{nc} CSI, dataset has {}x{}", g.h, g.w),
            ));
        }
    }
    if pred.context_len() == 0 || pred.context_len() > g.n_past {
        return Err(Error::config(
            "eval.context_lengths",
            format!(
                "context of {} frames requested, dataset has {}",
                pred.context_len(),
                g.n_past
            ),
        ));
    }
    if ecfg.horizon > g.n_future {
        return Err(Error::config(
            "eval.horizon",
            format!(
                "horizon {} exceeds the {} stored future frames",
                ecfg.horizon, g.n_future
            ),
        ));
    }
    if view.split.len == 0 {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    Ok(())
}

/// Per-step and average NMSE rows for every SNR on the grid.
fn evaluate_view(
    pred: &dyn Predictor,
    view: &SplitView,
    ecfg: &EvalConfig,
    icfg: &InferConfig,
    table: &mut ResultTable,
) -> Result<()> {
    ecfg.validate()?;
    check_predictor(pred, view, ecfg)?;
    let g = view.geometry;
    let n = ecfg.num_test_samples.min(view.split.len);
    let rows: Vec<usize> = (0..n).collect();
    let horizon = ecfg.horizon;
    let frame = g.frame_len();
    let batch = icfg.batch_size.max(1);
    let label = pred.label();
    let sampling_steps = pred.sampling_steps(icfg);

    for (si, &snr) in ecfg.snr_grid_db.iter().enumerate() {
        let icfg = InferConfig {
            inference_snr_db: Some(snr),
            ..icfg.clone()
        };
        let mut ratio_sums = vec![0.0; horizon];
        for (bi, chunk) in rows.chunks(batch).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(ecfg.seed);
            rng.set_stream(((si as u64) << 32) | bi as u64);
            let clean = context_batch(view.split, g, chunk, pred.context_len())?;
            let noisy = corrupt_with_snr_mode(clean.data(), snr, icfg.corruption, &mut rng);
            let context = csipred_autograd::Tensor::new(clean.shape().to_vec(), noisy)?;
            let truth = target_batch(view.split, g, chunk, horizon)?;
            let b = chunk.len();
            let forecast = pred.predict(&context, &truth, &icfg, &mut rng)?;
            let pred_phys = forecast.into_physical(view.scaler, b * horizon * frame)?;
            let truth_phys: Vec<f64> = truth.data().iter().map(|&v| view.scaler.inverse(v as f64)).collect();
            for (k, sum) in ratio_sums.iter_mut().enumerate() {
                let (mut h, mut p) = (Vec::with_capacity(b * frame), Vec::with_capacity(b * frame));
                for r in 0..b {
                    let o = (r * horizon + k) * frame;
                    h.extend_from_slice(&truth_phys[o..o + frame]);
                    p.extend_from_slice(&pred_phys[o..o + frame]);
                }
                *sum += nmse_ratios(&h, &p, b)?.iter().sum::<f64>();
            }
        }
        let per_step: Vec<f64> = ratio_sums.iter().map(|s| s / n as f64).collect();
        let avg = per_step.iter().sum::<f64>() / horizon as f64;
        let steps = per_step
            .iter()
            .enumerate()
            .map(|(k, &r)| (PredStep(Some(k + 1)), r))
            .chain(std::iter::once((PredStep(None), avg)));
        for (step, ratio) in steps {
            table.push(ResultRow {
                model: label.clone(),
                snr_db: snr,
                velocity: view.velocity,
                context_len: pred.context_len(),
                sampling_steps,
                prediction_step: step,
                nmse_db: ratio_to_db(ratio),
                n_samples: n,
            })?;
        }
    }
    Ok(())
}

fn test_view(data: &DatasetBundle) -> SplitView<'_> {
    SplitView {
        split: &data.test,
        geometry: Geometry {
            n_past: data.n_past,
            n_future: data.n_future,
            h: data.num_tx,
            w: data.num_sc,
        },
        scaler: &data.scaler,
        velocity: None,
    }
}

fn provenance(pred: &dyn Predictor, dataset_digest: String, ecfg: &EvalConfig) -> TableProvenance {
    TableProvenance {
        checkpoint_digest: pred.digest(),
        dataset_digest,
        eval_seed: ecfg.seed,
    }
}

/// NMSE on the test split for each SNR of the grid. Prediction steps are
/// numbered from 1; the `avg` row averages linear ratios over steps.
pub fn evaluate(
    pred: &dyn Predictor,
    data: &DatasetBundle,
    ecfg: &EvalConfig,
    icfg: &InferConfig,
) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    evaluate_view(pred, &test_view(data), ecfg, icfg, &mut table)?;
    table.provenance = provenance(pred, dataset_digest(data), ecfg);
    Ok(table)
}

/// Regenerates one fixed-velocity test set per grid velocity (same seed for
/// each) using the training scaler, and evaluates on each.
pub fn sweep_velocity(
    pred: &dyn Predictor,
    channel: &ChannelConfig,
    profiles: &[CdlProfile],
    scaler: &MinMaxScaler,
    ecfg: &EvalConfig,
    icfg: &InferConfig,
) -> Result<ResultTable> {
    ecfg.validate()?;
    let n_past = pred.context_len();
    let (nt, nc) = pred
        .frame_shape()
        .unwrap_or((channel.num_tx, channel.num_subcarriers_kept));
    let mut table = ResultTable::new(provenance(
        pred,
        json_digest(&(channel, profiles, ecfg.num_test_samples, ecfg.seed)),
        ecfg,
    ));
    for &v in &ecfg.velocities_kmh {
        let cfg = ChannelConfig {
            velocity_range_kmh: [v, v],
            ..channel.clone()
        };
        let split = build_eval_split(
            &cfg,
            profiles,
            ecfg.num_test_samples,
            n_past,
            ecfg.horizon,
            ecfg.seed,
            scaler,
        )?;
        let view = SplitView {
            split: &split,
            geometry: Geometry {
                n_past,
                n_future: ecfg.horizon,
                h: nt,
                w: nc,
            },
            scaler,
            velocity: Some(v),
        };
        evaluate_view(pred, &view, ecfg, icfg, &mut table)?;
    }
    Ok(table)
}

/// Evaluates one autoregressive checkpoint at every context length of the grid.
pub fn sweep_context(
    pred: &ModelPredictor,
    data: &DatasetBundle,
    ecfg: &EvalConfig,
    icfg: &InferConfig,
) -> Result<ResultTable> {
    if pred.mode() != InferenceMode::Ar {
        return Err(Error::config(
            "model.inference_mode",
            format!(
                "context sweeps need an autoregressive model, {} is {:?}",
                pred.label(),
                pred.mode()
            ),
        ));
    }
    let mut table = ResultTable::new(provenance(pred, dataset_digest(data), ecfg));
    for &len in &ecfg.context_lengths {
        evaluate_view(&pred.with_context_len(len), &test_view(data), ecfg, icfg, &mut table)?;
    }
    Ok(table)
}

/// Evaluates a diffusion checkpoint at each DDIM step count of the grid.
/// Corruption and initial-noise draws are identical across settings.
pub fn sweep_sampling_steps(
    pred: &ModelPredictor,
    data: &DatasetBundle,
    ecfg: &EvalConfig,
    icfg: &InferConfig,
) -> Result<ResultTable> {
    if !pred.forecaster.model.spec.is_diffusion() {
        return Err(Error::config(
            "model",
            format!("{} has no sampling steps to sweep", pred.label()),
        ));
    }
    let mut table = ResultTable::new(provenance(pred, dataset_digest(data), ecfg));
    for &steps in &ecfg.sampling_steps_grid {
        let icfg = InferConfig {
            num_sample_steps: steps,
            ..icfg.clone()
        };
        icfg.validate(pred.forecaster.sched.steps)?;
        evaluate_view(pred, &test_view(data), ecfg, &icfg, &mut table)?;
    }
    Ok(table)
}
