use crate::error::invalid;
use crate::{Float, Graph, Result, Tensor, Var};

impl<T: Float> Graph<T> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        Ok(self.op(
            value,
            &[a],
            Box::new(|g, p, _| Ok(vec![Some(g.clone().reshape(p[0].shape().to_vec())?)])),
        ))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let value = self.value(a).permute(perm)?;
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(self.op(
            value,
            &[a],
            Box::new(move |g, _, _| Ok(vec![Some(g.permute(&inverse)?)])),
        ))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, x: usize, y: usize) -> Result<Var> {
        let rank = self.value(a).rank();
        if x >= rank || y >= rank {
            return Err(invalid("transpose", format!("axes {x},{y} for rank {rank}")));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(x, y);
        self.permute(a, &perm)
    }

    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).narrow(axis, start, len)?;
        Ok(self.op(
            value,
            &[a],
            Box::new(move |g, p, _| {
                let shape = p[0].shape();
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let dim = shape[axis];
                let mut full = Tensor::zeros(shape.to_vec());
                let dst = full.data_mut();
                for o in 0..outer {
                    let base = (o * dim + start) * inner;
                    dst[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                Ok(vec![Some(full)])
            }),
        ))
    }

    pub fn cat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::cat(&values, axis)?;
        Ok(self.op(
            value,
            parts,
            Box::new(move |g, p, _| {
                let mut start = 0;
                let mut out = Vec::with_capacity(p.len());
                for part in p {
                    let len = part.shape()[axis];
                    out.push(Some(g.narrow(axis, start, len)?));
                    start += len;
                }
                Ok(out)
            }),
        ))
    }

    /// Gathers rows along axis 0 (indices may repeat).
    pub fn select0(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).select0(indices)?;
        let indices = indices.to_vec();
        Ok(self.op(
            value,
            &[a],
            Box::new(move |g, p, _| {
                let mut full = Tensor::zeros(p[0].shape().to_vec());
                let row: usize = p[0].shape()[1..].iter().product();
                let dst = full.data_mut();
                for (k, &i) in indices.iter().enumerate() {
                    for (d, &s) in dst[i * row..(i + 1) * row]
                        .iter_mut()
                        .zip(&g.data()[k * row..(k + 1) * row])
                    {
                        *d += s;
                    }
                }
                Ok(vec![Some(full)])
            }),
        ))
    }
}
