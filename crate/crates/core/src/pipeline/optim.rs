use std::collections::BTreeMap;

use csipred_autograd::Tensor;

use crate::error::{Error, Result};
use crate::nets::ParamBundle;

/// Parameters whose names start with `enc.` form the encoder group.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.")
}

/// Adam with bias correction and one learning rate per parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr_encoder: f64,
    pub lr_generator: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub t: u64,
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
}

impl Adam {
    pub fn new(lr_encoder: f64, lr_generator: f64, betas: [f64; 2], eps: f64) -> Self {
        Self {
            lr_encoder,
            lr_generator,
            betas,
            eps,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamBundle<f32>, grads: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        self.t += 1;
        let [b1, b2] = self.betas;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Checkpoint(format!("gradient for unknown parameter `{name}`")))?;
            let lr = if is_encoder_param(name) {
                self.lr_encoder
            } else {
                self.lr_generator
            };
            let n = g.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gi = gi as f64;
                let mn = b1 * *mi as f64 + (1.0 - b1) * gi;
                let vn = b2 * *vi as f64 + (1.0 - b2) * gi * gi;
                *mi = mn as f32;
                *vi = vn as f32;
                let upd = lr * (mn / c1) / ((vn / c2).sqrt() + self.eps);
                *pi = (*pi as f64 - upd) as f32;
            }
        }
        Ok(())
    }
}

/// Global L2 norm over every gradient tensor.
pub fn global_norm(grads: &BTreeMap<String, Tensor<f32>>) -> f64 {
    grads.values().map(|g| g.sq_norm()).sum::<f64>().sqrt()
}

/// Rescales gradients so that their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor<f32>>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = (max_norm / (norm + 1e-12)) as f32;
        for g in grads.values_mut() {
            g.map_inplace(|v| v * s);
        }
    }
    norm
}

/// `shadow <- decay * shadow + (1 - decay) * live`, tensor by tensor.
pub fn ema_update(shadow: &mut ParamBundle<f32>, live: &ParamBundle<f32>, decay: f64) -> Result<()> {
    shadow.check_compatible(live)?;
    let keep = decay as f32;
    let take = (1.0 - decay) as f32;
    for (name, s) in shadow.tensors.iter_mut() {
        let l = &live.tensors[name];
        for (a, &b) in s.data_mut().iter_mut().zip(l.data()) {
            *a = keep * *a + take * b;
        }
    }
    Ok(())
}

/// Effective decay for the `k`-th EMA update (0-based).
pub fn ema_decay_at(decay: f64, k: u64, warmup: bool) -> f64 {
    if warmup {
        decay.min((1.0 + k as f64) / (10.0 + k as f64))
    } else {
        decay
    }
}
