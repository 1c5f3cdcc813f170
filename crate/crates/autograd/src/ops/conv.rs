use crate::error::invalid;
use crate::kernels::{conv_backward, conv_forward, ConvGeometry};
use crate::{Float, Graph, Result, Tensor, TensorError, Var};

impl<T: Float> Graph<T> {
    /// 2-D convolution, `x: [B, C, H, W]`, `w: [Co, C, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: xs,
                rhs: ws,
            });
        }
        let geom = ConvGeometry {
            channels: xs[1],
            input: [1, xs[2], xs[3]],
            kernel: [1, ws[2], ws[3]],
            stride: [1, stride, stride],
            pad: [0, pad, pad],
        };
        let out = self.conv_general(x, w, bias, geom, xs[0], ws[0], ws[1])?;
        let s = self.shape(out).to_vec();
        self.reshape(out, &[s[0], s[1], s[3], s[4]])
    }

    /// 3-D convolution, `x: [B, C, D, H, W]`, `w: [Co, C, kd, kh, kw]`.
    pub fn conv3d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 5 || ws.len() != 5 {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: xs,
                rhs: ws,
            });
        }
        let geom = ConvGeometry {
            channels: xs[1],
            input: [xs[2], xs[3], xs[4]],
            kernel: [ws[2], ws[3], ws[4]],
            stride,
            pad,
        };
        self.conv_general(x, w, bias, geom, xs[0], ws[0], ws[1])
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_general(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        batch: usize,
        out_channels: usize,
        w_in: usize,
    ) -> Result<Var> {
        if w_in != geom.channels {
            return Err(TensorError::ShapeMismatch {
                op: "conv",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(w).to_vec(),
            });
        }
        let od = geom
            .output()
            .ok_or_else(|| invalid("conv", format!("kernel larger than padded input in {geom:?}")))?;
        let mut parents = vec![x, w];
        let bias_data = match bias {
            Some(b) => {
                if self.shape(b) != [out_channels] {
                    return Err(invalid("conv", format!("bias shape {:?}", self.shape(b))));
                }
                parents.push(b);
                Some(self.value(b).data().to_vec())
            }
            None => None,
        };
        let data = conv_forward(
            self.value(x).data(),
            batch,
            self.value(w).data(),
            bias_data.as_deref(),
            out_channels,
            &geom,
        );
        let plane: usize = od.iter().product();
        self.add_flops(2 * (batch * out_channels * geom.col_rows() * plane) as u64);
        let value = Tensor::new(vec![batch, out_channels, od[0], od[1], od[2]], data)?;
        let want_dx = self.requires_grad(x);
        let want_dw = self.requires_grad(w);
        Ok(self.op(
            value,
            &parents,
            Box::new(move |g, p, _| {
                let (dx, dw, db) = conv_backward(
                    p[0].data(),
                    batch,
                    p[1].data(),
                    out_channels,
                    &geom,
                    g.data(),
                    want_dx,
                    want_dw,
                );
                let mut grads = vec![
                    dx.map(|d| Tensor::new(p[0].shape().to_vec(), d)).transpose()?,
                    dw.map(|d| Tensor::new(p[1].shape().to_vec(), d)).transpose()?,
                ];
                if p.len() == 3 {
                    grads.push(Some(Tensor::new(vec![out_channels], db)?));
                }
                Ok(grads)
            }),
        ))
    }

    /// 2x2 max pooling over the last two axes (floor on odd sizes).
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(invalid("maxpool2", format!("rank {} input", xs.len())));
        }
        let r = xs.len();
        let (h, w) = (xs[r - 2], xs[r - 1]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(invalid("maxpool2", format!("spatial size {h}x{w}")));
        }
        let outer: usize = xs[..r - 2].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * oh * ow);
        let mut arg = Vec::with_capacity(outer * oh * ow);
        for o in 0..outer {
            let base = o * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    arg.push(best);
                }
            }
        }
        let mut shape = xs.clone();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        let value = Tensor::new(shape, out)?;
        Ok(self.op(
            value,
            &[x],
            Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].shape().to_vec());
                let d = dx.data_mut();
                for (&i, &gv) in arg.iter().zip(g.data()) {
                    d[i] += gv;
                }
                Ok(vec![Some(dx)])
            }),
        ))
    }

    /// Nearest-neighbour 2x upsampling of the last two axes.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(invalid("upsample2", format!("rank {} input", xs.len())));
        }
        let r = xs.len();
        let (h, w) = (xs[r - 2], xs[r - 1]);
        let outer: usize = xs[..r - 2].iter().product();
        let src = self.value(x).data();
        let mut out = vec![T::zero(); outer * 4 * h * w];
        for o in 0..outer {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    out[(o * 2 * h + i) * 2 * w + j] = src[(o * h + i / 2) * w + j / 2];
                }
            }
        }
        let mut shape = xs.clone();
        shape[r - 2] = 2 * h;
        shape[r - 1] = 2 * w;
        let value = Tensor::new(shape, out)?;
        Ok(self.op(
            value,
            &[x],
            Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].shape().to_vec());
                let d = dx.data_mut();
                let gd = g.data();
                for o in 0..outer {
                    for i in 0..2 * h {
                        for j in 0..2 * w {
                            d[(o * h + i / 2) * w + j / 2] += gd[(o * 2 * h + i) * 2 * w + j];
                        }
                    }
                }
                Ok(vec![Some(dx)])
            }),
        ))
    }
}
