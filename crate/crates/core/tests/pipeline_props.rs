use std::collections::BTreeMap;
use std::ops::ControlFlow;

use csipred::chansim::{build_dataset, default_profiles, ChannelConfig, DatasetBundle};
use csipred::error::Error;
use csipred::nets::{ModelKind, ModelSpec, ParamBundle};
use csipred::pipeline::*;
use csipred_autograd::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NP: usize = 4;
const NF: usize = 2;

fn dataset(np: usize) -> DatasetBundle {
    let cfg = ChannelConfig {
        num_steps: 16,
        ..ChannelConfig::default()
    };
    build_dataset(&cfg, &default_profiles(), 12, np, NF, [0.5, 0.25, 0.25], 3).unwrap()
}

fn cfg(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 3,
        max_steps: Some(steps),
        ema_interval: 1,
        seed,
        ..TrainConfig::default()
    }
}

fn run(kind: ModelKind, data: &DatasetBundle, tc: &TrainConfig) -> TrainOutcome {
    let spec = ModelSpec::desk(kind, NP, NF, data.num_tx, data.num_sc);
    train(&spec, data, tc, None, |_| ControlFlow::Continue(())).unwrap()
}

fn bundle(vals: &[(&str, Vec<f32>)]) -> ParamBundle<f32> {
    let mut b = ParamBundle::default();
    for (name, v) in vals {
        b.tensors
            .insert(name.to_string(), Tensor::new(vec![v.len()], v.clone()).unwrap());
    }
    b
}

#[test]
fn ema_decay_warmup_examples() {
    assert_eq!(ema_decay_at(0.995, 0, true), 0.1);
    assert!((ema_decay_at(0.995, 90, true) - 0.91).abs() < 1e-15);
    assert_eq!(ema_decay_at(0.995, 10_000, true), 0.995);
    assert_eq!(ema_decay_at(0.995, 0, false), 0.995);
}

#[test]
fn ema_update_blends_toward_live() {
    let mut shadow = bundle(&[("gen.w", vec![1.0, 2.0])]);
    let live = bundle(&[("gen.w", vec![0.0, 4.0])]);
    ema_update(&mut shadow, &live, 0.9).unwrap();
    let got = shadow.get("gen.w").unwrap().data().to_vec();
    assert!((got[0] - 0.9).abs() < 1e-6 && (got[1] - 2.2).abs() < 1e-6, "{got:?}");
    let other = bundle(&[("gen.v", vec![0.0, 4.0])]);
    assert!(ema_update(&mut shadow, &other, 0.9).is_err());
}

#[test]
fn adam_uses_group_learning_rates() {
    let mut p = bundle(&[("enc.a", vec![0.0; 3]), ("gen.b", vec![0.0; 3])]);
    let mut g = BTreeMap::new();
    g.insert("enc.a".to_string(), Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    g.insert("gen.b".to_string(), Tensor::new(vec![3], vec![3.0, -1.0, 4.0]).unwrap());
    let mut adam = Adam::new(1e-2, 1e-3, [0.9, 0.999], 1e-8);
    adam.step(&mut p, &g).unwrap();
    // first bias-corrected step has magnitude lr in every coordinate
    for (name, lr) in [("enc.a", 1e-2), ("gen.b", 1e-3)] {
        for (&w, &gr) in p.get(name).unwrap().data().iter().zip(g[name].data()) {
            assert!((w as f64 + lr * (gr as f64).signum()).abs() < 1e-7, "{name}: {w}");
        }
    }
    assert!(is_encoder_param("enc.cell.w") && !is_encoder_param("gen.head.w"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipped_norm_never_exceeds_bound(
        vals in proptest::collection::vec(-100.0f32..100.0, 1..40),
        max in 0.01f64..5.0,
    ) {
        let mut g = BTreeMap::new();
        let half = vals.len() / 2;
        g.insert("a".to_string(), Tensor::new(vec![half], vals[..half].to_vec()).unwrap());
        g.insert("b".to_string(), Tensor::new(vec![vals.len() - half], vals[half..].to_vec()).unwrap());
        let before = global_norm(&g);
        let reported = clip_grad_norm(&mut g, max);
        prop_assert!((reported - before).abs() <= 1e-9 * before.max(1.0));
        let after = global_norm(&g);
        prop_assert!(after <= max * (1.0 + 1e-6) + 1e-12);
        if before <= max {
            prop_assert!((after - before).abs() <= 1e-9 * before.max(1.0));
        }
    }
}

#[test]
fn training_is_bit_reproducible_and_seed_sensitive() {
    let data = dataset(NP);
    let a = run(ModelKind::Diu, &data, &cfg(3, 1));
    let b = run(ModelKind::Diu, &data, &cfg(3, 1));
    let c = run(ModelKind::Diu, &data, &cfg(3, 2));
    let losses = |o: &TrainOutcome| o.trace.iter().map(|m| m.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_ne!(losses(&a), losses(&c));
    assert_eq!(a.trace.len(), 3);
    assert_eq!(a.checkpoint.step, 3);
    assert!(a
        .trace
        .iter()
        .all(|m| m.loss.is_finite() && m.clipped_norm <= 1.0 + 1e-6));
}

#[test]
fn early_stop_and_metrics_stream() {
    let data = dataset(NP);
    let spec = ModelSpec::desk(ModelKind::Gru, NP, NF, data.num_tx, data.num_sc);
    let mut sink = Vec::new();
    let out = train(&spec, &data, &cfg(10, 0), Some(&mut sink), |m| {
        if m.step >= 4 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.trace.len(), 4);
    let lines: Vec<serde_json::Value> = String::from_utf8(sink)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["step"], 4);
}

#[test]
fn invalid_training_configs_are_rejected() {
    let data = dataset(NP);
    let spec = ModelSpec::desk(ModelKind::Gru, NP, NF, data.num_tx, data.num_sc);
    let bad = TrainConfig {
        batch_size: 0,
        ..cfg(1, 0)
    };
    assert!(matches!(
        train(&spec, &data, &bad, None, |_| ControlFlow::Continue(())),
        Err(Error::Config { .. })
    ));
    let long = ModelSpec::desk(ModelKind::Gru, NP + 1, NF, data.num_tx, data.num_sc);
    assert!(matches!(
        train(&long, &data, &cfg(1, 0), None, |_| ControlFlow::Continue(())),
        Err(Error::Config { .. })
    ));
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = dataset(NP);
    let out = run(ModelKind::Diu, &data, &cfg(2, 0));
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    save_checkpoint(&out.checkpoint, &p1).unwrap();
    let back = load_checkpoint(&p1).unwrap();
    assert_eq!(back, out.checkpoint);
    save_checkpoint(&back, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let spec = out.checkpoint.spec.clone();
    assert!(load_checkpoint_for(&p1, &spec).is_ok());
    let other = ModelSpec::desk(ModelKind::Diu, NP + 1, NF, data.num_tx, data.num_sc);
    assert!(matches!(load_checkpoint_for(&p1, &other), Err(Error::Checkpoint(_))));

    let bytes = std::fs::read(&p1).unwrap();
    std::fs::write(&p2, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(load_checkpoint(&p2), Err(Error::Corrupt { .. })));
}

fn context(data: &DatasetBundle, rows: usize, n: usize) -> Tensor<f32> {
    let g = Geometry {
        n_past: data.n_past,
        n_future: data.n_future,
        h: data.num_tx,
        w: data.num_sc,
    };
    let r: Vec<usize> = (0..rows).collect();
    context_batch(&data.train, g, &r, n).unwrap()
}

#[test]
fn ar_inference_accepts_any_context_length() {
    let data = dataset(8);
    let spec = ModelSpec::desk(ModelKind::Diu, NP, NF, data.num_tx, data.num_sc);
    let out = train(&spec, &data, &cfg(1, 0), None, |_| ControlFlow::Continue(())).unwrap();
    let f = Forecaster::from_checkpoint(&out.checkpoint).unwrap();
    let icfg = InferConfig::default();
    for n in [2, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, stats) = f.predict(&context(&data, 2, n), 3, &icfg, &mut rng).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 16, 16]);
        assert_eq!(stats.encoder_passes, 3);
        assert_eq!(stats.backbone_passes, 3 * icfg.num_sample_steps);
    }
}

#[test]
fn deterministic_inference_is_bit_reproducible() {
    let data = dataset(NP);
    let out = run(ModelKind::Diu, &data, &cfg(1, 0));
    let f = Forecaster::from_checkpoint(&out.checkpoint).unwrap();
    let icfg = InferConfig {
        zeta: 0.0,
        feedback_noise: FeedbackNoise::Sigma(0.0),
        ..InferConfig::default()
    };
    let x = context(&data, 2, NP);
    let a = f.predict(&x, NF, &icfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
    let b = f.predict(&x, NF, &icfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn seq2seq_needs_exact_context_and_rewindows_long_horizons() {
    let data = dataset(NP);
    let out = run(ModelKind::DiuSeq2seq, &data, &cfg(1, 0));
    let f = Forecaster::from_checkpoint(&out.checkpoint).unwrap();
    let icfg = InferConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let short = context(&data, 1, NP - 1);
    assert!(matches!(f.predict(&short, NF, &icfg, &mut rng), Err(Error::Input(_))));
    let (y, stats) = f.predict(&context(&data, 1, NP), 2 * NF + 1, &icfg, &mut rng).unwrap();
    assert_eq!(y.shape()[1], 2 * NF + 1);
    assert_eq!(stats.backbone_passes, 3 * icfg.num_sample_steps);
    assert_eq!(stats.encoder_passes, 0);
}

#[test]
fn direct_baselines_are_deterministic_single_pass() {
    let data = dataset(NP);
    for kind in [ModelKind::Gru, ModelKind::LinFormer, ModelKind::ConvLstm] {
        let out = run(kind, &data, &cfg(1, 0));
        let f = Forecaster::from_checkpoint(&out.checkpoint).unwrap();
        let x = context(&data, 2, NP);
        let icfg = InferConfig::default();
        let (a, stats) = f.predict(&x, NF, &icfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (b, _) = f.predict(&x, NF, &icfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(stats.backbone_passes, 1, "{kind}");
        assert_eq!(a.shape(), &[2, NF, 2, 16, 16]);
    }
}

#[test]
fn feedback_gain_and_noise() {
    let pred = Tensor::new(vec![1, 1, 2], vec![0.5f32, -0.25]).unwrap();
    let icfg = InferConfig {
        inference_snr_db: Some(20.0),
        feedback_noise: FeedbackNoise::Sigma(0.0),
        ..InferConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fb = feedback_frames(&pred, &icfg, &mut rng).unwrap();
    assert_eq!(fb.data(), &[5.0, -2.5]);
    let plain = InferConfig {
        inference_snr_db: None,
        ..InferConfig::default()
    };
    assert_eq!(feedback_frames(&pred, &plain, &mut rng).unwrap(), pred);
}
