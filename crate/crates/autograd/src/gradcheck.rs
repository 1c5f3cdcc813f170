//! Central finite-difference gradient checks in `f64`.

use crate::{Graph, Result, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Upper bound on probed entries per input.
    pub max_entries: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_entries: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12)` over
    /// every probed entry.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub probed: usize,
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences on an evenly spread subset of entries of every input.
pub fn check<F>(inputs: &[Tensor<f64>], cfg: GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let (mut diff_sq, mut norm_a, mut norm_n, mut max_abs, mut probed) = (0.0, 0.0, 0.0, 0.0f64, 0);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let n = inputs[k].numel();
        let step = n.div_ceil(cfg.max_entries.max(1)).max(1);
        for idx in (0..n).step_by(step) {
            let orig = inputs[k].data()[idx];
            work[k].data_mut()[idx] = orig + cfg.eps;
            let plus = eval(&work)?;
            work[k].data_mut()[idx] = orig - cfg.eps;
            let minus = eval(&work)?;
            work[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = grads.get(*var).map_or(0.0, |t| t.data()[idx]);
            diff_sq += (analytic - numeric).powi(2);
            norm_a += analytic * analytic;
            norm_n += numeric * numeric;
            max_abs = max_abs.max((analytic - numeric).abs());
            probed += 1;
        }
    }
    Ok(GradCheckReport {
        rel_error: diff_sq.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(1e-12),
        max_abs_error: max_abs,
        probed,
    })
}
