use crate::{Float, Graph, Result, Tensor, Var};

impl<T: Float> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_zip(self.value(b), |x, y| x + y)?;
        Ok(self.op(
            value,
            &[a, b],
            Box::new(|g, p, _| {
                Ok(vec![
                    Some(g.sum_to_shape(p[0].shape())?),
                    Some(g.sum_to_shape(p[1].shape())?),
                ])
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_zip(self.value(b), |x, y| x - y)?;
        Ok(self.op(
            value,
            &[a, b],
            Box::new(|g, p, _| {
                Ok(vec![
                    Some(g.sum_to_shape(p[0].shape())?),
                    Some(g.sum_to_shape(p[1].shape())?.map(|v| -v)),
                ])
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_zip(self.value(b), |x, y| x * y)?;
        Ok(self.op(
            value,
            &[a, b],
            Box::new(|g, p, _| {
                let ga = g.broadcast_zip(p[1], |gv, bv| gv * bv)?.sum_to_shape(p[0].shape())?;
                let gb = g.broadcast_zip(p[0], |gv, av| gv * av)?.sum_to_shape(p[1].shape())?;
                Ok(vec![Some(ga), Some(gb)])
            }),
        ))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).broadcast_zip(self.value(b), |x, y| x / y)?;
        Ok(self.op(
            value,
            &[a, b],
            Box::new(|g, p, out| {
                let ga = g.broadcast_zip(p[1], |gv, bv| gv / bv)?.sum_to_shape(p[0].shape())?;
                let gy = g.zip_map(out, |gv, y| gv * y)?;
                let gb = gy.broadcast_zip(p[1], |v, bv| -v / bv)?.sum_to_shape(p[1].shape())?;
                Ok(vec![Some(ga), Some(gb)])
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let value = self.value(a).scale(s);
        self.op(value, &[a], Box::new(move |g, _, _| Ok(vec![Some(g.scale(s))])))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::of(s);
        let value = self.value(a).map(|v| v + s);
        self.op(value, &[a], Box::new(|g, _, _| Ok(vec![Some(g.clone())])))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Applies `f` element-wise; `df(x, y)` is the derivative at input `x`
    /// with output `y`.
    pub fn unary(&mut self, a: Var, f: fn(T) -> T, df: fn(T, T) -> T) -> Var {
        let value = self.value(a).map(f);
        self.op(
            value,
            &[a],
            Box::new(move |g, p, out| {
                let mut grad = g.clone();
                for ((gv, &x), &y) in grad.data_mut().iter_mut().zip(p[0].data()).zip(out.data()) {
                    *gv *= df(x, y);
                }
                Ok(vec![Some(grad)])
            }),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), |x, _| x.recip())
    }

    pub fn sqr(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| x + x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.sqrt(), |_, y| T::of(0.5) / y)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, gelu_grad)
    }

    /// Multiplies by a fixed mask scaled by `1 / (1 - p)`; the caller draws
    /// the mask so randomness stays under its control.
    pub fn dropout_with_mask(&mut self, a: Var, keep: &[bool], p: f64) -> Result<Var> {
        if keep.len() != self.value(a).numel() {
            return Err(crate::error::invalid("dropout", "mask length differs from input"));
        }
        let s = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = keep.iter().map(|&k| if k { s } else { T::zero() }).collect();
        let mask = Tensor::new(self.shape(a).to_vec(), mask)?;
        let value = self.value(a).zip_map(&mask, |x, m| x * m)?;
        Ok(self.op(
            value,
            &[a],
            Box::new(move |g, _, _| Ok(vec![Some(g.zip_map(&mask, |gv, m| gv * m)?)])),
        ))
    }

    /// Inverted dropout drawing its mask from `rng`.
    pub fn dropout<R: rand::Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(a);
        }
        let keep: Vec<bool> = (0..self.value(a).numel()).map(|_| rng.random::<f64>() >= p).collect();
        self.dropout_with_mask(a, &keep, p)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu<T: Float>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let inner = c * (x + k * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

fn gelu_grad<T: Float>(x: T, _y: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let inner = c * (x + k * x * x * x);
    let th = inner.tanh();
    let dinner = c * (T::one() + T::of(3.0) * k * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * dinner
}
