use crate::error::invalid;
use crate::kernels::gemm;
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_rhs: bool,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(mismatch());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(mismatch());
    }
    let batch: usize = a[..a.len() - 2].iter().product();
    if b.len() == 2 {
        return Ok(MatmulDims {
            batch,
            m,
            k,
            n,
            shared_rhs: true,
        });
    }
    if a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(mismatch());
    }
    Ok(MatmulDims {
        batch,
        m,
        k,
        n,
        shared_rhs: false,
    })
}

impl<T: Float> Graph<T> {
    /// Batched matrix product over the last two axes. A rank-2 right-hand side
    /// is shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let d = matmul_dims(av.shape(), bv.shape())?;
        let MatmulDims {
            batch,
            m,
            k,
            n,
            shared_rhs,
        } = d;
        let mut out = vec![T::zero(); batch * m * n];
        if shared_rhs {
            gemm(
                batch * m,
                k,
                n,
                T::one(),
                av.data(),
                (k, 1),
                bv.data(),
                (n, 1),
                T::zero(),
                &mut out,
                (n, 1),
            );
        } else {
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    T::one(),
                    &av.data()[i * m * k..(i + 1) * m * k],
                    (k, 1),
                    &bv.data()[i * k * n..(i + 1) * k * n],
                    (n, 1),
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                    (n, 1),
                );
            }
        }
        let mut shape = av.shape().to_vec();
        let r = shape.len();
        shape[r - 1] = n;
        let value = Tensor::new(shape, out)?;
        self.add_flops(2 * (batch * m * k * n) as u64);
        Ok(self.op(
            value,
            &[a, b],
            Box::new(move |g, p, _| {
                let (a, b, g) = (p[0].data(), p[1].data(), g.data());
                let mut da = vec![T::zero(); a.len()];
                let mut db = vec![T::zero(); b.len()];
                if shared_rhs {
                    let rows = batch * m;
                    gemm(rows, n, k, T::one(), g, (n, 1), b, (1, n), T::zero(), &mut da, (k, 1));
                    gemm(k, rows, n, T::one(), a, (1, k), g, (n, 1), T::zero(), &mut db, (n, 1));
                } else {
                    for i in 0..batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let ai = &a[i * m * k..(i + 1) * m * k];
                        let bi = &b[i * k * n..(i + 1) * k * n];
                        gemm(
                            m,
                            n,
                            k,
                            T::one(),
                            gi,
                            (n, 1),
                            bi,
                            (1, n),
                            T::zero(),
                            &mut da[i * m * k..(i + 1) * m * k],
                            (k, 1),
                        );
                        gemm(
                            k,
                            m,
                            n,
                            T::one(),
                            ai,
                            (1, k),
                            gi,
                            (n, 1),
                            T::zero(),
                            &mut db[i * k * n..(i + 1) * k * n],
                            (n, 1),
                        );
                    }
                }
                Ok(vec![
                    Some(Tensor::new(p[0].shape().to_vec(), da)?),
                    Some(Tensor::new(p[1].shape().to_vec(), db)?),
                ])
            }),
        ))
    }

    /// `x @ w^T + bias` with `x: [.., in]`, `w: [out, in]`, `bias: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.rank() != 2 || xv.rank() == 0 || xv.shape()[xv.rank() - 1] != wv.shape()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let (out_f, in_f) = (wv.shape()[0], wv.shape()[1]);
        let rows = xv.numel() / in_f.max(1);
        let mut out = vec![T::zero(); rows * out_f];
        gemm(
            rows,
            in_f,
            out_f,
            T::one(),
            xv.data(),
            (in_f, 1),
            wv.data(),
            (1, in_f),
            T::zero(),
            &mut out,
            (out_f, 1),
        );
        let mut parents = vec![x, w];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [out_f] {
                return Err(invalid(
                    "linear",
                    format!("bias shape {:?}, expected [{out_f}]", bv.shape()),
                ));
            }
            for row in out.chunks_mut(out_f) {
                for (o, &bb) in row.iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
            parents.push(b);
        }
        let mut shape = xv.shape().to_vec();
        let r = shape.len();
        shape[r - 1] = out_f;
        let value = Tensor::new(shape, out)?;
        self.add_flops(2 * (rows * in_f * out_f) as u64);
        Ok(self.op(
            value,
            &parents,
            Box::new(move |g, p, _| {
                let (x, w, g) = (p[0].data(), p[1].data(), g.data());
                let mut dx = vec![T::zero(); x.len()];
                let mut dw = vec![T::zero(); w.len()];
                gemm(
                    rows,
                    out_f,
                    in_f,
                    T::one(),
                    g,
                    (out_f, 1),
                    w,
                    (in_f, 1),
                    T::zero(),
                    &mut dx,
                    (in_f, 1),
                );
                gemm(
                    out_f,
                    rows,
                    in_f,
                    T::one(),
                    g,
                    (1, out_f),
                    x,
                    (in_f, 1),
                    T::zero(),
                    &mut dw,
                    (in_f, 1),
                );
                let mut grads = vec![
                    Some(Tensor::new(p[0].shape().to_vec(), dx)?),
                    Some(Tensor::new(p[1].shape().to_vec(), dw)?),
                ];
                if p.len() == 3 {
                    let mut db = vec![T::zero(); out_f];
                    for row in g.chunks(out_f) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    grads.push(Some(Tensor::new(vec![out_f], db)?));
                }
                Ok(grads)
            }),
        ))
    }
}
