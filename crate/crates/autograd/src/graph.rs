use crate::error::{Result, TensorError};
use crate::{Float, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward closure: `(grad_out, parent_values, out_value) -> grad per parent`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>>>;

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Define-by-run tape. Values are kept for the lifetime of the graph so
/// backward closures can read their inputs.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    flops: u64,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            flops: 0,
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Vec::new(), None, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Floating-point operations (2 x multiply-accumulates) of every matrix
    /// product and convolution recorded so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub(crate) fn add_flops(&mut self, n: u64) {
        self.flops += n;
    }

    fn push(
        &mut self,
        value: Tensor<T>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an operation. The backward closure is dropped when no parent
    /// needs a gradient.
    pub(crate) fn op(&mut self, value: Tensor<T>, parents: &[Var], backward: BackwardFn<T>) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let parents: Vec<usize> = parents.iter().map(|p| p.0).collect();
        if requires_grad {
            self.push(value, parents, Some(backward), true)
        } else {
            self.push(value, parents, None, false)
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let parent_values: Vec<&Tensor<T>> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let parent_grads = backward(&grad, &parent_values, &node.value)?;
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                if g.shape() != self.nodes[p].value.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "backward",
                        lhs: g.shape().to_vec(),
                        rhs: self.nodes[p].value.shape().to_vec(),
                    });
                }
                match grads[p].as_mut() {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grads[p] = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of the leaves reached by a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
