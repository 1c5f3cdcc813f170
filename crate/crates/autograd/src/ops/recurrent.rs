use super::elementwise::sigmoid;
use crate::error::invalid;
use crate::{Float, Graph, Result, Tensor, Var};

impl<T: Float> Graph<T> {
    /// ConvLSTM cell update. `gates: [B, 4C, ...]` in order input, forget,
    /// output, candidate; `c_prev: [B, C, ...]`. Returns `(h, c)`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Result<(Var, Var)> {
        let gs = self.shape(gates).to_vec();
        let cs = self.shape(c_prev).to_vec();
        if gs.len() < 2 || cs.len() != gs.len() || gs[1] != 4 * cs[1] || gs[0] != cs[0] || gs[2..] != cs[2..] {
            return Err(invalid("lstm_cell", format!("gates {gs:?} with state {cs:?}")));
        }
        let (batch, ch) = (cs[0], cs[1]);
        let plane: usize = cs[2..].iter().product();
        let block = ch * plane;
        let gv = self.value(gates).data();
        let cv = self.value(c_prev).data();
        // Output stacks [h, c] along the channel axis.
        let mut out = vec![T::zero(); batch * 2 * block];
        for b in 0..batch {
            let gb = &gv[b * 4 * block..(b + 1) * 4 * block];
            for k in 0..block {
                let i = sigmoid(gb[k]);
                let f = sigmoid(gb[block + k]);
                let o = sigmoid(gb[2 * block + k]);
                let g = gb[3 * block + k].tanh();
                let c = f * cv[b * block + k] + i * g;
                out[b * 2 * block + k] = o * c.tanh();
                out[b * 2 * block + block + k] = c;
            }
        }
        let mut shape = cs.clone();
        shape[1] = 2 * ch;
        let value = Tensor::new(shape, out)?;
        let stacked = self.op(
            value,
            &[gates, c_prev],
            Box::new(move |g, p, out| {
                let (gv, cv, ov, gd) = (p[0].data(), p[1].data(), out.data(), g.data());
                let mut dg = vec![T::zero(); gv.len()];
                let mut dc = vec![T::zero(); cv.len()];
                for b in 0..batch {
                    let gb = &gv[b * 4 * block..(b + 1) * 4 * block];
                    let dgb = &mut dg[b * 4 * block..(b + 1) * 4 * block];
                    for k in 0..block {
                        let i = sigmoid(gb[k]);
                        let f = sigmoid(gb[block + k]);
                        let o = sigmoid(gb[2 * block + k]);
                        let gg = gb[3 * block + k].tanh();
                        let c = ov[b * 2 * block + block + k];
                        let tc = c.tanh();
                        let dh = gd[b * 2 * block + k];
                        let dcell = gd[b * 2 * block + block + k] + dh * o * (T::one() - tc * tc);
                        let one = T::one();
                        dgb[k] = dcell * gg * i * (one - i);
                        dgb[block + k] = dcell * cv[b * block + k] * f * (one - f);
                        dgb[2 * block + k] = dh * tc * o * (one - o);
                        dgb[3 * block + k] = dcell * i * (one - gg * gg);
                        dc[b * block + k] = dcell * f;
                    }
                }
                Ok(vec![
                    Some(Tensor::new(p[0].shape().to_vec(), dg)?),
                    Some(Tensor::new(p[1].shape().to_vec(), dc)?),
                ])
            }),
        );
        let h = self.narrow(stacked, 1, 0, ch)?;
        let c = self.narrow(stacked, 1, ch, ch)?;
        Ok((h, c))
    }
}
