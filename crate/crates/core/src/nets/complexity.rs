use csipred_autograd::Tensor;

use super::model::{InferenceMode, Model, ModelSpec};
use super::{count_spec_params, Ctx, ParamBundle};
use crate::error::{Error, Result};

/// Scalar parameter count of a spec, without allocating the weights.
pub fn spec_param_count(spec: &ModelSpec) -> Result<usize> {
    Ok(count_spec_params(&Model::new(spec)?.param_specs()))
}

/// FLOPs (2 per multiply-accumulate) of one forward pass at batch size 1,
/// counted over dense, matrix-product and convolution layers. For diffusion
/// models this is one encoder pass over the context plus one backbone pass.
pub fn estimate_flops(spec: &ModelSpec) -> Result<u64> {
    let model = Model::new(spec).map_err(|e| Error::Estimator(e.to_string()))?;
    let params: ParamBundle<f32> = model.init_params(0)?;
    flops_with(&model, &params).map_err(|e| Error::Estimator(format!("{}: {e}", spec.name)))
}

fn flops_with(model: &Model, params: &ParamBundle<f32>) -> Result<u64> {
    let s = &model.spec;
    let mut ctx = Ctx::eval(params);
    let context = ctx.input(Tensor::zeros(vec![1, s.n_past, 2, s.num_tx, s.num_sc]));
    match s.inference_mode {
        InferenceMode::Direct => {
            model.direct(&mut ctx, context)?;
        }
        _ => {
            let cond = model.encode(&mut ctx, context)?;
            let x = ctx.input(Tensor::zeros(vec![1, s.frames_per_pass(), 2, s.num_tx, s.num_sc]));
            model.predict_clean(&mut ctx, x, cond, &[0.0])?;
        }
    }
    Ok(ctx.g.flops())
}
