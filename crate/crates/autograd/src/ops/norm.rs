use crate::error::invalid;
use crate::{Float, Graph, Result, Tensor, Var};

/// Normalises `x` viewed as `[outer, groups, per_group]` where each group
/// holds `channels_per_group` channels of `inner` elements.
struct Layout {
    batch: usize,
    groups: usize,
    cpg: usize,
    inner: usize,
}

fn normalize_forward<T: Float>(
    x: &[T],
    l: &Layout,
    gamma: Option<&[T]>,
    beta: Option<&[T]>,
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = l.cpg * l.inner;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(l.batch * l.groups);
    for (bg, chunk) in x.chunks(n).enumerate() {
        let mean = chunk.iter().map(|v| v.f64()).sum::<f64>() / n as f64;
        let var = chunk.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd.push(T::of(rs));
        let g = bg % l.groups;
        for (i, &v) in chunk.iter().enumerate() {
            let idx = bg * n + i;
            let c = g * l.cpg + i / l.inner;
            let xh = T::of((v.f64() - mean) * rs);
            xhat[idx] = xh;
            let scale = gamma.map_or(T::one(), |gm| gm[c]);
            let shift = beta.map_or(T::zero(), |bt| bt[c]);
            y[idx] = xh * scale + shift;
        }
    }
    (y, xhat, rstd)
}

fn normalize_backward<T: Float>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    l: &Layout,
    gamma: Option<&[T]>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = l.cpg * l.inner;
    let channels = l.groups * l.cpg;
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    let nf = T::of(n as f64);
    for bg in 0..l.batch * l.groups {
        let g = bg % l.groups;
        let range = bg * n..(bg + 1) * n;
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for i in 0..n {
            let idx = range.start + i;
            let c = g * l.cpg + i / l.inner;
            let d = dy[idx] * gamma.map_or(T::one(), |gm| gm[c]);
            s1 += d;
            s2 += d * xhat[idx];
            dgamma[c] += dy[idx] * xhat[idx];
            dbeta[c] += dy[idx];
        }
        let (m1, m2) = (s1 / nf, s2 / nf);
        for i in 0..n {
            let idx = range.start + i;
            let c = g * l.cpg + i / l.inner;
            let d = dy[idx] * gamma.map_or(T::one(), |gm| gm[c]);
            dx[idx] = rstd[bg] * (d - m1 - xhat[idx] * m2);
        }
    }
    (dx, dgamma, dbeta)
}

impl<T: Float> Graph<T> {
    /// Group normalisation over `x: [B, C, ...]` with optional per-channel
    /// `(gamma, beta)`.
    pub fn group_norm(&mut self, x: Var, groups: usize, affine: Option<(Var, Var)>, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || groups == 0 || !xs[1].is_multiple_of(groups) {
            return Err(invalid("group_norm", format!("{groups} groups for shape {xs:?}")));
        }
        let layout = Layout {
            batch: xs[0],
            groups,
            cpg: xs[1] / groups,
            inner: xs[2..].iter().product(),
        };
        self.normalize(x, layout, affine, eps, "group_norm")
    }

    /// Layer normalisation over the last axis with optional `(gamma, beta)`.
    pub fn layer_norm(&mut self, x: Var, affine: Option<(Var, Var)>, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().ok_or_else(|| invalid("layer_norm", "scalar input"))?;
        let rows = xs.iter().product::<usize>() / d.max(1);
        // Each row is one group of `d` channels with a single element each;
        // the affine parameters are indexed by position in the row.
        let layout = Layout {
            batch: rows,
            groups: 1,
            cpg: d,
            inner: 1,
        };
        self.normalize(x, layout, affine, eps, "layer_norm")
    }

    fn normalize(&mut self, x: Var, l: Layout, affine: Option<(Var, Var)>, eps: f64, op: &'static str) -> Result<Var> {
        let channels = l.groups * l.cpg;
        let mut parents = vec![x];
        if let Some((g, b)) = affine {
            if self.shape(g) != [channels] || self.shape(b) != [channels] {
                return Err(invalid(
                    op,
                    format!(
                        "affine shapes {:?}/{:?}, expected [{channels}]",
                        self.shape(g),
                        self.shape(b)
                    ),
                ));
            }
            parents.push(g);
            parents.push(b);
        }
        let gamma = affine.map(|(g, _)| self.value(g).data());
        let beta = affine.map(|(_, b)| self.value(b).data());
        let (y, xhat, rstd) = normalize_forward(self.value(x).data(), &l, gamma, beta, eps);
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.op(
            value,
            &parents,
            Box::new(move |g, p, _| {
                let gamma = p.get(1).map(|t| t.data());
                let (dx, dg, db) = normalize_backward(g.data(), &xhat, &rstd, &l, gamma);
                let mut grads = vec![Some(Tensor::new(p[0].shape().to_vec(), dx)?)];
                if p.len() == 3 {
                    grads.push(Some(Tensor::new(vec![channels], dg)?));
                    grads.push(Some(Tensor::new(vec![channels], db)?));
                }
                Ok(grads)
            }),
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().ok_or_else(|| invalid("softmax", "scalar input"))?;
        let mut y = self.value(x).data().to_vec();
        for row in y.chunks_mut(d) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let value = Tensor::new(xs, y)?;
        Ok(self.op(
            value,
            &[x],
            Box::new(move |g, _, out| {
                let mut dx = vec![T::zero(); g.numel()];
                for ((dxr, gr), yr) in dx.chunks_mut(d).zip(g.data().chunks(d)).zip(out.data().chunks(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((o, &gv), &yv) in dxr.iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - dot);
                    }
                }
                Ok(vec![Some(Tensor::new(out.shape().to_vec(), dx)?)])
            }),
        ))
    }
}
