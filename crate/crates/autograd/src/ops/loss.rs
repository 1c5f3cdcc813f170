use crate::{Float, Graph, Result, Tensor, TensorError, Var};

impl<T: Float> Graph<T> {
    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Mean Huber loss with threshold `delta`.
    pub fn huber(&mut self, pred: Var, target: Var, delta: f64) -> Result<Var> {
        self.check_same("huber", pred, target)?;
        let d = T::of(delta);
        let half = T::of(0.5);
        let n = self.value(pred).numel().max(1);
        let total: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(&p, &t)| {
                let r = (p - t).abs();
                if r <= d { half * r * r } else { d * (r - half * d) }.f64()
            })
            .sum();
        let value = Tensor::scalar(T::of(total / n as f64));
        let inv_n = T::of(1.0 / n as f64);
        Ok(self.op(
            value,
            &[pred, target],
            Box::new(move |g, p, _| {
                let s = g.data()[0] * inv_n;
                let dp = p[0].zip_map(p[1], |a, b| {
                    let r = a - b;
                    s * if r.abs() <= d { r } else { d * r.signum() }
                })?;
                let dt = dp.map(|v| -v);
                Ok(vec![Some(dp), Some(dt)])
            }),
        ))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_same("mse", pred, target)?;
        let n = self.value(pred).numel().max(1);
        let total: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(&p, &t)| (p - t).f64().powi(2))
            .sum();
        let value = Tensor::scalar(T::of(total / n as f64));
        let two_over_n = T::of(2.0 / n as f64);
        Ok(self.op(
            value,
            &[pred, target],
            Box::new(move |g, p, _| {
                let s = g.data()[0] * two_over_n;
                let dp = p[0].zip_map(p[1], |a, b| s * (a - b))?;
                let dt = dp.map(|v| -v);
                Ok(vec![Some(dp), Some(dt)])
            }),
        ))
    }
}
