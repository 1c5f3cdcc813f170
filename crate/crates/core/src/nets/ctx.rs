use std::collections::BTreeMap;

use csipred_autograd::{Float, Gradients, Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamBundle;
use crate::error::{Error, Result};

/// A forward pass in progress: the tape, the parameters bound into it and
/// the train/eval switch.
pub struct Ctx<'p, T: Float> {
    pub g: Graph<T>,
    params: &'p ParamBundle<T>,
    bound: BTreeMap<String, Var>,
    track_grads: bool,
    train: bool,
    rng: ChaCha8Rng,
}

impl<'p, T: Float> Ctx<'p, T> {
    /// Evaluation mode: no gradients, dropout disabled.
    pub fn eval(params: &'p ParamBundle<T>) -> Self {
        Self::new(params, false, false, 0)
    }

    /// Training mode with gradients; `seed` drives dropout masks.
    pub fn train(params: &'p ParamBundle<T>, seed: u64) -> Self {
        Self::new(params, true, true, seed)
    }

    pub fn new(params: &'p ParamBundle<T>, train: bool, track_grads: bool, seed: u64) -> Self {
        Self {
            g: Graph::new(),
            params,
            bound: BTreeMap::new(),
            track_grads,
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    /// Binds a parameter onto the tape (once per pass).
    pub fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| Error::Input(format!("missing parameter `{name}`")))?
            .clone();
        let v = if self.track_grads {
            self.g.leaf(t)
        } else {
            self.g.constant(t)
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.g.constant(t)
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !self.train || p <= 0.0 {
            return Ok(x);
        }
        Ok(self.g.dropout(x, p, &mut self.rng)?)
    }

    /// Parameter gradients by name after `backward`.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.bound
            .iter()
            .filter_map(|(k, &v)| grads.take(v).map(|g| (k.clone(), g)))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.g.value(v)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.g.shape(v).to_vec()
    }
}
