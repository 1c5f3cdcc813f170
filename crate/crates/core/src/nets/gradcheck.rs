//! Central finite-difference checks of parameter gradients for whole networks.

use csipred_autograd::gradcheck::{GradCheckConfig, GradCheckReport};
use csipred_autograd::Var;

use super::{Ctx, ParamBundle};
use crate::error::Result;

/// Compares tape gradients of the scalar `f` with respect to every parameter
/// against central differences on an evenly spread subset of entries.
/// `f` runs in training mode with a fixed seed so that any dropout mask is
/// identical across evaluations.
pub fn check_params<F>(params: &ParamBundle<f64>, cfg: GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx<f64>) -> Result<Var>,
{
    let eval = |p: &ParamBundle<f64>| -> Result<f64> {
        let mut ctx = Ctx::new(p, true, false, 0);
        let out = f(&mut ctx)?;
        Ok(ctx.value(out).item()?)
    };
    let mut ctx = Ctx::new(params, true, true, 0);
    let loss = f(&mut ctx)?;
    let mut grads = ctx.g.backward(loss)?;
    let analytic = ctx.param_grads(&mut grads);
    drop(ctx);

    let (mut diff_sq, mut norm_a, mut norm_n, mut max_abs, mut probed) = (0.0, 0.0, 0.0, 0.0f64, 0);
    let mut work = params.clone();
    for (name, t) in &params.tensors {
        let n = t.numel();
        let step = n.div_ceil(cfg.max_entries.max(1)).max(1);
        for idx in (0..n).step_by(step) {
            let orig = t.data()[idx];
            work.get_mut(name).expect("same names").data_mut()[idx] = orig + cfg.eps;
            let plus = eval(&work)?;
            work.get_mut(name).expect("same names").data_mut()[idx] = orig - cfg.eps;
            let minus = eval(&work)?;
            work.get_mut(name).expect("same names").data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = analytic.get(name).map_or(0.0, |g| g.data()[idx]);
            diff_sq += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
            max_abs = max_abs.max((a - numeric).abs());
            probed += 1;
        }
    }
    Ok(GradCheckReport {
        rel_error: diff_sq.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(1e-12),
        max_abs_error: max_abs,
        probed,
    })
}
