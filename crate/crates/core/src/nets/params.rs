use std::collections::BTreeMap;

use csipred_autograd::{Float, Tensor};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }

    /// Fan-in scaled uniform initialisation.
    pub fn fan_in(name: impl Into<String>, shape: Vec<usize>, fan_in: usize) -> Self {
        Self::new(name, shape, Init::Uniform(1.0 / (fan_in.max(1) as f64).sqrt()))
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named parameter tensors in deterministic (sorted) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamBundle<T: Float> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Float> ParamBundle<T> {
    pub fn init<R: Rng + ?Sized>(specs: &[ParamSpec], rng: &mut R) -> Result<Self> {
        Self::build(
            specs,
            |spec, rng| match spec.init {
                Init::Uniform(b) => Tensor::from_fn(spec.shape.clone(), |_| T::of(rng.random_range(-b..=b))),
                Init::Zeros => Tensor::zeros(spec.shape.clone()),
                Init::Ones => Tensor::ones(spec.shape.clone()),
            },
            rng,
        )
    }

    /// Every entry uniform in `[-bound, bound]`, ignoring the declared
    /// initialisers. Used where zero-initialised layers would hide gradients.
    pub fn init_dense<R: Rng + ?Sized>(specs: &[ParamSpec], bound: f64, rng: &mut R) -> Result<Self> {
        Self::build(
            specs,
            |spec, rng| Tensor::from_fn(spec.shape.clone(), |_| T::of(rng.random_range(-bound..=bound))),
            rng,
        )
    }

    fn build<R: Rng + ?Sized>(
        specs: &[ParamSpec],
        mut make: impl FnMut(&ParamSpec, &mut R) -> Tensor<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        for spec in specs {
            if tensors.insert(spec.name.clone(), make(spec, rng)).is_some() {
                return Err(Error::Input(format!("duplicate parameter `{}`", spec.name)));
            }
        }
        Ok(Self { tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn cast<U: Float>(&self) -> ParamBundle<U> {
        ParamBundle {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Checks names and shapes against another bundle.
    pub fn check_compatible<U: Float>(&self, other: &ParamBundle<U>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.tensors.iter().zip(&other.tensors) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{ka}` {:?} vs `{kb}` {:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Total number of scalar parameters.
pub fn count_params<T: Float>(bundle: &ParamBundle<T>) -> usize {
    bundle.tensors.values().map(|t| t.numel()).sum()
}

pub fn count_spec_params(specs: &[ParamSpec]) -> usize {
    specs.iter().map(ParamSpec::numel).sum()
}
