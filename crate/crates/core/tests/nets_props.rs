use csipred::nets::gradcheck::check_params;
use csipred::nets::layers::{Conv2d, Linear};
use csipred::nets::{
    count_params, count_spec_params, estimate_flops, mask_channel, sinusoid, spec_param_count, BackboneSpec,
    ConvLstmCell, ConvLstmEncoder, ConvLstmForecaster, Ctx, Dit, EncoderKind, EncoderSpec, GruForecaster,
    InferenceMode, LinFormerTrunk, Model, ModelKind, ModelSpec, Module, ParamBundle, ParamSpec, UNet2d, UNet3d,
};
use csipred::Error;
use csipred_autograd::gradcheck::GradCheckConfig;
use csipred_autograd::{Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn specs_of(m: &impl Module) -> Vec<ParamSpec> {
    let mut v = Vec::new();
    m.specs(&mut v);
    v
}

fn dense_params(m: &impl Module, seed: u64) -> ParamBundle<f64> {
    ParamBundle::init_dense(&specs_of(m), 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn project(ctx: &mut Ctx<f64>, y: Var) -> Var {
    let w = rand_tensor(&ctx.shape(y), 999);
    let w = ctx.input(w);
    let p = ctx.g.mul(y, w).unwrap();
    ctx.g.sum_all(p)
}

fn grad_cfg() -> GradCheckConfig {
    GradCheckConfig {
        eps: 1e-5,
        max_entries: 12,
    }
}

fn toy_unet2d() -> BackboneSpec {
    BackboneSpec {
        base_channels: 8,
        channel_multipliers: vec![1, 2],
        attention_flags: vec![false, true],
        layers_per_block: 1,
        time_embed_dim: 8,
        time_freq_dim: 8,
        ..BackboneSpec::unet2d()
    }
}

fn toy_dit(patch: usize) -> BackboneSpec {
    BackboneSpec {
        patch_size: patch,
        hidden_dim: 8,
        depth: 2,
        heads: 2,
        time_embed_dim: 8,
        time_freq_dim: 8,
        ..BackboneSpec::dit()
    }
}

fn toy_unet3d() -> BackboneSpec {
    BackboneSpec {
        base_channels: 4,
        channel_multipliers: vec![1, 2, 4],
        time_embed_dim: 8,
        time_freq_dim: 8,
        heads: 2,
        ..BackboneSpec::unet3d()
    }
}

#[test]
fn convlstm_cell_zero_params_halves_cell() {
    let cell = ConvLstmCell::new("cell", 2, 3);
    let params = ParamBundle::<f64>::init(&specs_of(&cell), &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .zeros_like();
    let mut ctx = Ctx::eval(&params);
    let x = ctx.input(rand_tensor(&[2, 2, 4, 5], 1));
    let h = ctx.input(rand_tensor(&[2, 3, 4, 5], 2));
    let c0 = rand_tensor(&[2, 3, 4, 5], 3);
    let c = ctx.input(c0.clone());
    let st = cell.step(&mut ctx, x, csipred::nets::LstmState { h, c }).unwrap();
    let (h1, c1) = (ctx.value(st.h).clone(), ctx.value(st.c).clone());
    assert_eq!(h1.shape(), &[2, 3, 4, 5]);
    for i in 0..c0.numel() {
        let want_c = 0.5 * c0.data()[i];
        assert!((c1.data()[i] - want_c).abs() < 1e-15);
        assert!((h1.data()[i] - 0.5 * want_c.tanh()).abs() < 1e-15);
    }

    let mut ctx = Ctx::eval(&params);
    let x = ctx.input(rand_tensor(&[1, 2, 4, 5], 4));
    let st0 = cell.zero_state(&mut ctx, 1, 4, 5);
    let st = cell.step(&mut ctx, x, st0).unwrap();
    assert!(ctx.value(st.h).data().iter().all(|&v| v == 0.0));
    assert!(ctx.value(st.c).data().iter().all(|&v| v == 0.0));
}

#[test]
fn convlstm_cell_rejects_spatial_mismatch() {
    let cell = ConvLstmCell::new("cell", 2, 3);
    let params = dense_params(&cell, 0);
    let mut ctx = Ctx::eval(&params);
    let x = ctx.input(rand_tensor(&[1, 2, 4, 4], 1));
    let h = ctx.input(rand_tensor(&[1, 3, 4, 5], 2));
    let c = ctx.input(rand_tensor(&[1, 3, 4, 5], 3));
    let err = cell.step(&mut ctx, x, csipred::nets::LstmState { h, c }).unwrap_err();
    assert!(matches!(err, Error::Input(_)));
}

#[test]
fn convlstm_cell_gradients() {
    let cell = ConvLstmCell::new("cell", 2, 3);
    let params = dense_params(&cell, 5);
    let x = rand_tensor(&[2, 2, 3, 4], 6);
    let (h, c) = (rand_tensor(&[2, 3, 3, 4], 7), rand_tensor(&[2, 3, 3, 4], 8));
    let r = check_params(&params, grad_cfg(), |ctx| {
        let (xv, hv, cv) = (ctx.input(x.clone()), ctx.input(h.clone()), ctx.input(c.clone()));
        let st = cell.step(ctx, xv, csipred::nets::LstmState { h: hv, c: cv })?;
        let both = ctx.g.cat(&[st.h, st.c], 1)?;
        Ok(project(ctx, both))
    })
    .unwrap();
    assert!(r.rel_error < GRAD_TOL, "{r:?}");
}

#[test]
fn convlstm_encoder_zero_weights_gives_bias_map() {
    let spec = EncoderSpec {
        hidden: 4,
        latent_channels: 3,
        ..EncoderSpec::default()
    };
    let enc = ConvLstmEncoder::new("enc", &spec);
    let mut params = ParamBundle::<f64>::init(&specs_of(&enc), &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .zeros_like();
    let bias = rand_tensor(&[3], 11);
    *params.get_mut("enc.proj.b").unwrap() = bias.clone();
    let frame = rand_tensor(&[1, 1, 2, 4, 4], 12);
    let seq = Tensor::cat(&[&frame, &frame, &frame], 1).unwrap();
    let mut ctx = Ctx::eval(&params);
    let s = ctx.input(seq);
    let z = enc.forward(&mut ctx, s).unwrap();
    let z = ctx.value(z);
    assert_eq!(z.shape(), &[1, 3, 4, 4]);
    for (i, v) in z.data().iter().enumerate() {
        assert_eq!(*v, bias.data()[i / 16]);
    }
}

#[test]
fn convlstm_encoder_shape_independent_of_length_and_stable() {
    let spec = EncoderSpec {
        hidden: 4,
        latent_channels: 3,
        ..EncoderSpec::default()
    };
    let enc = ConvLstmEncoder::new("enc", &spec);
    let params = ParamBundle::<f64>::init(&specs_of(&enc), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for steps in [1, 5, 100] {
        let mut ctx = Ctx::eval(&params);
        let s = ctx.input(rand_tensor(&[1, steps, 2, 4, 4], steps as u64));
        let st = enc.advance(&mut ctx, s, None).unwrap();
        assert!(ctx.value(st.h).data().iter().all(|v| v.abs() < 1.0));
        assert!(ctx.value(st.c).all_finite());
        let z = enc.project(&mut ctx, st).unwrap();
        assert_eq!(ctx.shape(z), vec![1, 3, 4, 4]);
    }
}

#[test]
fn linformer_zero_mixing_is_normalized_identity() {
    let spec = EncoderSpec {
        kind: EncoderKind::Linformer,
        hidden: 8,
        ff_dim: 6,
        num_layers: 3,
        ..EncoderSpec::default()
    };
    let trunk = LinFormerTrunk::new("lf", &spec, 5, 2 * 2 * 2);
    let mut params = ParamBundle::<f64>::init(&specs_of(&trunk), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for (name, t) in params.tensors.iter_mut() {
        if name.contains(".tmlp.") || name.contains(".ff") {
            *t = Tensor::zeros(t.shape().to_vec());
        }
    }
    let seq = rand_tensor(&[2, 5, 2, 2, 2], 3);
    let mut ctx = Ctx::eval(&params);
    let s = ctx.input(seq.clone());
    let out = trunk.forward(&mut ctx, s).unwrap();
    let out = ctx.value(out).clone();
    assert_eq!(out.shape(), &[2, 5, 8]);

    let mut ctx = Ctx::eval(&params);
    let s = ctx.input(seq.reshape(vec![2, 5, 8]).unwrap());
    let e = Linear::new("lf.embed", 8, 8).forward(&mut ctx, s).unwrap();
    let mut n = e;
    for _ in 0..2 * spec.num_layers {
        n = ctx.g.layer_norm(n, None, 1e-5).unwrap();
    }
    let d = ctx.value(n).max_abs_diff(&out).unwrap();
    assert!(d < 1e-12, "{d}");

    let mut ctx = Ctx::eval(&params);
    let s = ctx.input(rand_tensor(&[1, 4, 2, 2, 2], 4));
    assert!(matches!(trunk.forward(&mut ctx, s), Err(Error::Input(_))));
}

#[test]
fn gru_forecaster_gradients_and_zero_params() {
    let spec = EncoderSpec {
        kind: EncoderKind::Gru,
        hidden: 5,
        num_layers: 2,
        ..EncoderSpec::default()
    };
    let net = GruForecaster::new("net", &spec, 3, 2, 2);
    let params = dense_params(&net, 9);
    let seq = rand_tensor(&[2, 2, 2, 2, 2], 10);
    let r = check_params(&params, grad_cfg(), |ctx| {
        let s = ctx.input(seq.clone());
        let y = net.forward(ctx, s)?;
        Ok(project(ctx, y))
    })
    .unwrap();
    assert!(r.rel_error < GRAD_TOL, "{r:?}");

    let mut zero = params.zeros_like();
    let bias = rand_tensor(&[3 * 8], 12);
    *zero.get_mut("net.out.b").unwrap() = bias.clone();
    let mut ctx = Ctx::eval(&zero);
    let s = ctx.input(seq);
    let y = net.forward(&mut ctx, s).unwrap();
    let y = ctx.value(y);
    assert_eq!(y.shape(), &[2, 3, 2, 2, 2]);
    for (i, v) in y.data().iter().enumerate() {
        assert_eq!(*v, bias.data()[i % 24]);
    }
}

#[test]
fn convlstm_forecaster_range_and_eval_determinism() {
    let spec = EncoderSpec {
        hidden: 4,
        dropout: 0.2,
        ..EncoderSpec::default()
    };
    let net = ConvLstmForecaster::new("net", &spec, 3);
    let params = ParamBundle::<f64>::init(&specs_of(&net), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let seq = rand_tensor(&[2, 4, 2, 4, 4], 4).map(|v| 5.0 * v);
    let run = |train: bool, seed: u64| {
        let mut ctx = Ctx::new(&params, train, false, seed);
        let s = ctx.input(seq.clone());
        let y = net.forward(&mut ctx, s).unwrap();
        ctx.value(y).clone()
    };
    let a = run(false, 1);
    assert_eq!(a.shape(), &[2, 3, 2, 4, 4]);
    assert!(a.data().iter().all(|v| v.abs() < 1.0));
    assert_eq!(a, run(false, 2));
    assert_ne!(run(true, 1), run(true, 2));
}

#[test]
fn sinusoid_edges() {
    let t0 = sinusoid::<f64>(&[0.0], 256).unwrap();
    assert!(t0.data()[..128].iter().all(|&v| v == 0.0));
    assert!(t0.data()[128..].iter().all(|&v| v == 1.0));
    assert!(matches!(sinusoid::<f64>(&[0.0], 7), Err(Error::Config { .. })));
}

#[test]
fn sinusoid_distinct_over_training_range() {
    let ts: Vec<f64> = (0..2000).map(f64::from).collect();
    let e = sinusoid::<f64>(&ts, 256).unwrap();
    let d = e.data();
    let mut min_dist = f64::INFINITY;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let s: f64 = (0..256).map(|k| (d[i * 256 + k] - d[j * 256 + k]).powi(2)).sum();
            min_dist = min_dist.min(s);
        }
    }
    assert!(min_dist > 1e-6, "{min_dist}");
}

#[test]
fn time_embedding_width() {
    let spec = BackboneSpec::unet2d();
    let te = csipred::nets::TimeEmbedding::new("t", spec.time_freq_dim, spec.time_embed_dim);
    assert_eq!(te.out_dim(), 256);
}

#[test]
fn unet2d_gradients_and_shape() {
    let net = UNet2d::new("gen", &toy_unet2d(), 6, 2).unwrap();
    let params = dense_params(&net, 13);
    let x = rand_tensor(&[2, 6, 4, 4], 14);
    let r = check_params(&params, grad_cfg(), |ctx| {
        let xv = ctx.input(x.clone());
        let y = net.forward(ctx, xv, &[3.0, 17.0])?;
        Ok(project(ctx, y))
    })
    .unwrap();
    assert!(r.rel_error < GRAD_TOL, "{r:?}");

    let mut ctx = Ctx::eval(&params);
    let xv = ctx.input(x);
    let y = net.forward(&mut ctx, xv, &[1.0, 2.0]).unwrap();
    assert_eq!(ctx.shape(y), vec![2, 2, 4, 4]);
}

#[test]
fn unet2d_skip_ablation_changes_output() {
    let net = UNet2d::new(
        "gen",
        &BackboneSpec {
            base_channels: 8,
            time_embed_dim: 8,
            time_freq_dim: 8,
            ..BackboneSpec::unet2d()
        },
        4,
        2,
    )
    .unwrap();
    let params = ParamBundle::<f64>::init(&specs_of(&net), &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
    let x = rand_tensor(&[1, 4, 8, 8], 16);
    let run = |skip: Option<usize>| {
        let mut ctx = Ctx::eval(&params);
        let xv = ctx.input(x.clone());
        let y = net.forward_ablated(&mut ctx, xv, &[5.0], skip).unwrap();
        ctx.value(y).clone()
    };
    let full = run(None);
    for k in 0..6 {
        assert!(
            full.max_abs_diff(&run(Some(k))).unwrap() > 1e-9,
            "skip {k} has no effect"
        );
    }
    let mut ctx = Ctx::eval(&params);
    let xv = ctx.input(rand_tensor(&[1, 4, 5, 8], 1));
    assert!(matches!(net.forward(&mut ctx, xv, &[0.0]), Err(Error::Config { .. })));
}

#[test]
fn dit_zero_at_init_then_nonzero_after_one_step() {
    let spec = BackboneSpec::dit();
    let net = Dit::new("gen", &spec, 2 + 32, 2, 16, 16).unwrap();
    assert_eq!(net.num_tokens(), 16);
    let mut params = ParamBundle::<f64>::init(&specs_of(&net), &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    let x = rand_tensor(&[2, 34, 16, 16], 18);
    let target = rand_tensor(&[2, 2, 16, 16], 19);
    let mut ctx = Ctx::eval(&params);
    let xv = ctx.input(x.clone());
    let y = net.forward(&mut ctx, xv, &[4.0, 900.0]).unwrap();
    assert!(ctx.value(y).data().iter().all(|&v| v == 0.0));
    assert_eq!(ctx.shape(y), vec![2, 2, 16, 16]);

    let grads = {
        let mut ctx = Ctx::train(&params, 0);
        let xv = ctx.input(x.clone());
        let tv = ctx.input(target);
        let y = net.forward(&mut ctx, xv, &[4.0, 900.0]).unwrap();
        let loss = ctx.g.mse(y, tv).unwrap();
        let mut g = ctx.g.backward(loss).unwrap();
        ctx.param_grads(&mut g)
    };
    for (name, g) in grads {
        let p = params.get_mut(&name).unwrap();
        let upd = p.zip_map(&g, |a, b| a - 0.1 * b).unwrap();
        *p = upd;
    }
    let mut ctx = Ctx::eval(&params);
    let xv = ctx.input(x);
    let y = net.forward(&mut ctx, xv, &[4.0, 900.0]).unwrap();
    assert!(ctx.value(y).data().iter().any(|&v| v != 0.0));
}

#[test]
fn dit_gradients_and_patch_grid() {
    let net = Dit::new("gen", &toy_dit(2), 4, 2, 8, 8).unwrap();
    let params = dense_params(&net, 20);
    let x = rand_tensor(&[1, 4, 8, 8], 21);
    let r = check_params(&params, grad_cfg(), |ctx| {
        let xv = ctx.input(x.clone());
        let y = net.forward(ctx, xv, &[7.0])?;
        Ok(project(ctx, y))
    })
    .unwrap();
    assert!(r.rel_error < GRAD_TOL, "{r:?}");
    assert!(matches!(
        Dit::new("gen", &toy_dit(3), 4, 2, 8, 8),
        Err(Error::Config { .. })
    ));
}

#[test]
fn dit_unpatchify_inverts_patch_rearrangement() {
    let (p, c, h, w) = (4, 2, 8, 12);
    let net = Dit::new("gen", &toy_dit(p), c, c, h, w).unwrap();
    let x = rand_tensor(&[1, c, h, w], 22);
    let (gh, gw) = (h / p, w / p);
    let tokens = Tensor::from_fn(vec![1, gh * gw, p * p * c], |idx| {
        let (tok, feat) = (idx / (p * p * c), idx % (p * p * c));
        let (i, j) = (tok / gw, tok % gw);
        let (ph, pw, ch) = (feat / (p * c), (feat / c) % p, feat % c);
        x.data()[(ch * h + i * p + ph) * w + j * p + pw]
    });
    let params = ParamBundle::<f64>::default();
    let mut ctx = Ctx::eval(&params);
    let t = ctx.input(tokens);
    let y = net.unpatchify(&mut ctx, t, 1).unwrap();
    assert_eq!(ctx.value(y), &x);
}

#[test]
fn unet3d_gradients_mask_and_shapes() {
    let net = UNet3d::new("gen", &toy_unet3d(), 3, 2).unwrap();
    let params = dense_params(&net, 23);
    let past = rand_tensor(&[1, 2, 2, 8, 8], 24);
    let noisy = rand_tensor(&[1, 1, 2, 8, 8], 25);
    let r = check_params(&params, grad_cfg(), |ctx| {
        let (p, n) = (ctx.input(past.clone()), ctx.input(noisy.clone()));
        let v = UNet3d::stack_input(ctx, p, n)?;
        let y = net.forward(ctx, v, &[11.0])?;
        Ok(project(ctx, y))
    })
    .unwrap();
    assert!(r.rel_error < GRAD_TOL, "{r:?}");

    let m = mask_channel::<f64>(1, 2, 1, 8, 8);
    assert!(m.data()[..128].iter().all(|&v| v == 1.0));
    assert!(m.data()[128..].iter().all(|&v| v == 0.0));

    let mut ctx = Ctx::eval(&params);
    let v = ctx.input(rand_tensor(&[1, 3, 5, 8, 8], 26));
    let y = net.forward(&mut ctx, v, &[1.0]).unwrap();
    assert_eq!(ctx.shape(y), vec![1, 2, 5, 8, 8]);
    let v = ctx.input(rand_tensor(&[1, 3, 5, 4, 8], 26));
    assert!(matches!(net.forward(&mut ctx, v, &[1.0]), Err(Error::Config { .. })));
}

#[test]
fn diu3_keeps_only_future_frames() {
    let mut spec = ModelSpec::desk(ModelKind::Diu3, 3, 2, 8, 8);
    spec.backbone = Some(toy_unet3d());
    let model = Model::new(&spec).unwrap();
    let params = model.init_params::<f64>(0).unwrap();
    let mut ctx = Ctx::eval(&params);
    let c = ctx.input(rand_tensor(&[2, 3, 2, 8, 8], 1));
    let cond = model.encode(&mut ctx, c).unwrap();
    let x = ctx.input(rand_tensor(&[2, 2, 2, 8, 8], 2));
    let y = model.predict_clean(&mut ctx, x, cond, &[1.0, 2.0]).unwrap();
    assert_eq!(ctx.shape(y), vec![2, 2, 2, 8, 8]);
}

#[test]
fn count_params_examples() {
    let conv = Conv2d::same("c", 2, 4, 3);
    let specs = specs_of(&conv);
    assert_eq!(count_spec_params(&specs), 76);
    let b = ParamBundle::<f32>::init(&specs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(count_params(&b), 76);
    assert_eq!(count_params(&ParamBundle::<f32>::default()), 0);
}

#[test]
fn flop_counting_rules() {
    let lin = Linear::new("l", 6, 5);
    let params = ParamBundle::<f32>::init(&specs_of(&lin), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut ctx = Ctx::eval(&params);
    let x = ctx.input(Tensor::zeros(vec![1, 6]));
    lin.forward(&mut ctx, x).unwrap();
    assert_eq!(ctx.g.flops(), 2 * 6 * 5);

    let conv = Conv2d::same("c", 3, 4, 3);
    let params = ParamBundle::<f32>::init(&specs_of(&conv), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let flops = |h: usize, w: usize| {
        let mut ctx = Ctx::eval(&params);
        let x = ctx.input(Tensor::zeros(vec![1, 3, h, w]));
        conv.forward(&mut ctx, x).unwrap();
        ctx.g.flops()
    };
    assert_eq!(flops(5, 6), 2 * 9 * 3 * 4 * 30);
    assert_eq!(flops(10, 12), 4 * flops(5, 6));
}

#[test]
fn model_spec_invariants() {
    let mut s = ModelSpec::desk(ModelKind::Diu, 4, 2, 16, 16);
    s.validate().unwrap();
    s.inference_mode = InferenceMode::Seq2seq;
    assert!(matches!(s.validate(), Err(Error::Config { .. })));
    let mut s = ModelSpec::desk(ModelKind::Diu3, 4, 2, 16, 16);
    s.backbone = Some(BackboneSpec::unet2d());
    assert!(matches!(s.validate(), Err(Error::Config { .. })));
    let s = ModelSpec::desk(ModelKind::Gru, 4, 2, 16, 16);
    assert!(s.backbone.is_none());
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
}

#[test]
fn every_desk_model_runs_and_is_deterministic_in_eval() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::desk(kind, 4, 2, 16, 16);
        let model = Model::new(&spec).unwrap();
        let params = model.init_params::<f32>(1).unwrap();
        let ctxt = rand_tensor(&[1, 4, 2, 16, 16], 2).cast::<f32>();
        let noisy = rand_tensor(&[1, spec.frames_per_pass(), 2, 16, 16], 3).cast::<f32>();
        let run = || {
            let mut ctx = Ctx::eval(&params);
            let c = ctx.input(ctxt.clone());
            let y = if spec.is_diffusion() {
                let cond = model.encode(&mut ctx, c).unwrap();
                let x = ctx.input(noisy.clone());
                model.predict_clean(&mut ctx, x, cond, &[5.0]).unwrap()
            } else {
                model.direct(&mut ctx, c).unwrap()
            };
            ctx.value(y).clone()
        };
        let a = run();
        let frames = if spec.is_diffusion() { spec.frames_per_pass() } else { 2 };
        assert_eq!(a.shape(), &[1, frames, 2, 16, 16], "{kind}");
        assert!(a.all_finite());
        assert_eq!(a, run(), "{kind}");
        assert!(estimate_flops(&spec).unwrap() > 0);
    }
}

#[test]
fn paper_complexity_extremes() {
    let counts: Vec<(ModelKind, usize)> = ModelKind::ALL
        .into_iter()
        .map(|k| (k, spec_param_count(&ModelSpec::paper(k, 30, 10, 16, 16)).unwrap()))
        .collect();
    let min = counts.iter().min_by_key(|c| c.1).unwrap();
    let max = counts.iter().max_by_key(|c| c.1).unwrap();
    assert_eq!(min.0, ModelKind::ConvLstm, "{counts:?}");
    assert_eq!(max.0, ModelKind::Diu3, "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn convlstm_gates_bounded(seed in 0u64..1000, scale in 0.1f64..20.0) {
        let cell = ConvLstmCell::new("cell", 2, 2);
        let params = ParamBundle::<f64>::init(&specs_of(&cell), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut ctx = Ctx::eval(&params);
        let mut st = cell.zero_state(&mut ctx, 1, 3, 3);
        for t in 0..20 {
            let x = ctx.input(rand_tensor(&[1, 2, 3, 3], seed * 31 + t).map(|v| v * scale));
            st = cell.step(&mut ctx, x, st).unwrap();
        }
        prop_assert!(ctx.value(st.h).data().iter().all(|v| v.abs() < 1.0));
        prop_assert!(ctx.value(st.c).data().iter().all(|v| v.abs() <= 20.0));
    }

    #[test]
    fn unet2d_output_shape_is_spec_determined(b in 1usize..3, hq in 1usize..4, wq in 1usize..4, cin in 1usize..5) {
        let net = UNet2d::new("gen", &toy_unet2d(), cin, 2).unwrap();
        let params = ParamBundle::<f32>::init(&specs_of(&net), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut ctx = Ctx::eval(&params);
        let x = ctx.input(Tensor::zeros(vec![b, cin, 2 * hq, 2 * wq]));
        let ts = vec![1.0; b];
        let y = net.forward(&mut ctx, x, &ts).unwrap();
        prop_assert_eq!(ctx.shape(y), vec![b, 2, 2 * hq, 2 * wq]);
    }
}
