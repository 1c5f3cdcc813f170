use crate::error::invalid;
use crate::{Float, Graph, Result, Tensor, Var};

impl<T: Float> Graph<T> {
    pub fn sum_all(&mut self, a: Var) -> Var {
        let total: T = self.value(a).data().iter().copied().sum();
        self.op(
            Tensor::scalar(total),
            &[a],
            Box::new(|g, p, _| Ok(vec![Some(Tensor::full(p[0].shape().to_vec(), g.data()[0]))])),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums over `axis`, keeping it with length one.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.rank() {
            return Err(invalid("sum_axis", format!("axis {axis} for rank {}", x.rank())));
        }
        let shape = x.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &x.data()[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = 1;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.op(
            value,
            &[a],
            Box::new(|g, p, _| {
                Ok(vec![Some(
                    Tensor::zeros(p[0].shape().to_vec()).broadcast_zip(g, |_, gv| gv)?,
                )])
            }),
        ))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self.value(a).shape().get(axis).copied().unwrap_or(1).max(1) as f64;
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / n))
    }
}
