use csipred::chansim::*;
use csipred::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_cfg() -> ChannelConfig {
    ChannelConfig {
        num_tx: 4,
        num_subcarriers_kept: 4,
        num_steps: 10,
        ..Default::default()
    }
}

#[test]
fn single_zero_delay_cluster_is_flat_across_subcarriers() {
    let mut p = default_profiles().remove(0);
    p.clusters.truncate(1);
    p.clusters[0].normalized_delay = 0.0;
    let h = generate_channel(&p, &ChannelConfig::default(), 90.0, 400.0, 4).unwrap();
    for n in 0..h.steps {
        for k in 0..h.num_tx {
            for m in 1..h.num_sc {
                assert!((h.at(n, k, m) - h.at(n, k, 0)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn empirical_snr_of_corruption() {
    // Unit-power X (all ones): signal power rho, noise power 1.
    let x = vec![1.0f32; 100_000];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let snr_db = 5.0;
    let rho = 10f64.powf(snr_db / 10.0);
    let y = corrupt_with_snr(&x, snr_db, &mut rng);
    let noise: Vec<f64> = y.iter().map(|&v| v as f64 - rho.sqrt()).collect();
    let n = noise.len() as f64;
    let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / n;
    // Var of a chi-square(1) mean: 2/n.
    let se = (2.0 / n).sqrt();
    assert!((noise_power - 1.0).abs() < 3.0 * se, "noise power {noise_power}");
    let snr_hat = rho / noise_power;
    assert!((snr_hat - rho).abs() < 3.0 * se * rho, "snr {snr_hat} vs {rho}");
}

#[test]
fn dataset_files_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg();
    let profiles = default_profiles();
    let paths: Vec<_> = (0..2)
        .map(|i| {
            let b = build_dataset(&cfg, &profiles, 8, 3, 2, [0.75, 0.125, 0.125], 21).unwrap();
            let p = dir.path().join(format!("d{i}.csid"));
            write_dataset(&b, &p).unwrap();
            p
        })
        .collect();
    let (a, b) = (std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
    assert_eq!(a, b);
    let back = read_dataset(&paths[0]).unwrap();
    assert_eq!(back.train.len, 6);
    std::fs::write(&paths[1], &a[..a.len() - 10]).unwrap();
    assert!(matches!(read_dataset(&paths[1]), Err(Error::Corrupt { .. })));
}

#[test]
fn x_and_y_are_contiguous_in_time() {
    // A single moving ray rotates every entry by the same phase per step, so
    // the context-to-target transition must show that same rotation.
    let mut p = default_profiles().remove(0);
    p.clusters.truncate(1);
    p.clusters[0].normalized_delay = 0.0;
    p.rays_per_cluster = 1;
    p.ray_offset_deg = vec![0.0];
    let cfg = ChannelConfig {
        velocity_range_kmh: [60.0, 60.0],
        ..tiny_cfg()
    };
    let b = build_dataset(&cfg, &[p], 3, 3, 2, [1.0, 0.0, 0.0], 5).unwrap();
    let f = b.frame_len();
    let plane = f / 2;
    let entry = |frames: &[f32], n: usize| {
        let re = b.scaler.inverse(frames[n * f] as f64);
        let im = b.scaler.inverse(frames[n * f + plane] as f64);
        num_complex::Complex64::new(re, im)
    };
    for s in 0..b.train.len {
        let x = &b.train.x[s * 3 * f..(s + 1) * 3 * f];
        let y = &b.train.y[s * 2 * f..(s + 1) * 2 * f];
        let step = entry(x, 1) / entry(x, 0);
        let across = entry(y, 0) / entry(x, 2);
        let inside = entry(y, 1) / entry(y, 0);
        assert!((step - across).norm() < 1e-4, "{step} vs {across}");
        assert!((step - inside).norm() < 1e-4);
    }
}

proptest! {
    #[test]
    fn array_response_unit_norm(phi in -10.0f64..10.0, n in 1usize..64, d in 0.1f64..2.0) {
        let a = array_response(phi, n, d).unwrap();
        let norm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaler_round_trip(lo in -100.0f64..0.0, span in 1e-3f64..100.0, v in -200.0f64..200.0) {
        let s = MinMaxScaler { min_val: lo, max_val: lo + span };
        let back = s.inverse(s.scale(v));
        prop_assert!((back - v).abs() <= 1e-6 * v.abs().max(1.0));
    }

    #[test]
    fn generation_is_pure(seed in any::<u64>(), v in 0.0f64..150.0, ds in 10.0f64..500.0, pi in 0usize..5) {
        let p = &default_profiles()[pi];
        let cfg = tiny_cfg();
        let a = generate_channel(p, &cfg, v, ds, seed).unwrap();
        let b = generate_channel(p, &cfg, v, ds, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
