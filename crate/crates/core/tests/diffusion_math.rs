use std::cell::Cell;

use csipred::diffusion::*;
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Delegates to a real generator and counts every draw.
struct CountingRng {
    inner: ChaCha8Rng,
    calls: Cell<usize>,
}

impl CountingRng {
    fn new() -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(0),
            calls: Cell::new(0),
        }
    }
}

impl RngCore for CountingRng {
    fn next_u32(&mut self) -> u32 {
        self.calls.set(self.calls.get() + 1);
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.calls.set(self.calls.get() + 1);
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.calls.set(self.calls.get() + 1);
        self.inner.fill_bytes(dst)
    }
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn sched() -> NoiseSchedule {
    make_cosine_schedule(2000, 1e-4, 2e-2).unwrap()
}

#[test]
fn unclipped_alpha_bar_zero_matches_direct_evaluation() {
    // cos^2((0.008 / 1.008) * pi / 2), evaluated independently.
    let expected = 0.999_844_591_000_408_2;
    assert!((cosine_alpha_bar(0, 2000) - expected).abs() < 1e-12);
}

#[test]
fn forward_then_inverse_recovers_noise() {
    let s = sched();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &t in &[0usize, 17, 500, 1999] {
        let h0 = normal_vec(64, &mut rng);
        let eps = normal_vec(64, &mut rng);
        let ht = forward_diffuse(&h0, t, &eps, &s).unwrap();
        let back = noise_from_sample(&ht, &h0, t, &s).unwrap();
        let err = back.iter().zip(&eps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "t={t} err={err}");
        // Explicit noise makes the round trip in the other direction too.
        let h0hat = normal_vec(64, &mut rng);
        let e = noise_from_sample(&ht, &h0hat, t, &s).unwrap();
        let again = forward_diffuse(&h0hat, t, &e, &s).unwrap();
        let err = again.iter().zip(&ht).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}

#[test]
fn noiseless_and_vanishing_numerator_cases() {
    let s = sched();
    let h0 = [0.5, -1.5, 2.0];
    let out = forward_diffuse(&h0, 300, &[0.0; 3], &s).unwrap();
    let a = s.alpha_bar[300].sqrt();
    assert!(out.iter().zip(&h0).all(|(o, h)| (o - a * h).abs() < 1e-15));
    let hhat: Vec<f64> = out.iter().map(|v| v / a).collect();
    let e = noise_from_sample(&out, &hhat, 300, &s).unwrap();
    assert!(e.iter().all(|v| v.abs() < 1e-12));
    assert!(forward_diffuse(&h0, 300, &[0.0; 2], &s).is_err());
}

#[test]
fn degenerate_alpha_bar_is_rejected() {
    let mut s = sched();
    s.alpha_bar[5] = 1.0;
    assert!(matches!(
        noise_from_sample(&[1.0], &[1.0], 5, &s),
        Err(csipred::Error::DegenerateStep(_))
    ));
}

#[test]
fn zeta_one_sigma_matches_posterior_variance() {
    let s = sched();
    for t in 1..s.steps {
        let sigma = ddim_sigma(t, Some(t - 1), 1.0, &s);
        let diff = (sigma * sigma - s.posterior_variance(t)).abs();
        assert!(diff < 1e-10, "t={t} diff={diff}");
    }
}

#[test]
fn zeta_zero_draws_nothing_and_is_deterministic() {
    let s = sched();
    let cfg = SamplerConfig {
        num_sample_steps: 3,
        zeta: 0.0,
    };
    let mut rng = CountingRng::new();
    let ht = [0.1, 0.7, -0.3];
    let h0 = [0.2, 0.5, -0.1];
    let a = ddim_step(&ht, &h0, 1999, Some(999), &cfg, &s, &mut rng).unwrap();
    let b = ddim_step(&ht, &h0, 1999, Some(999), &cfg, &s, &mut rng).unwrap();
    assert_eq!(a, b);
    assert_eq!(rng.calls.get(), 0);
    let noisy = SamplerConfig { zeta: 0.5, ..cfg };
    ddim_step(&ht, &h0, 1999, Some(999), &noisy, &s, &mut rng).unwrap();
    assert!(rng.calls.get() > 0);
}

#[test]
fn perfect_predictor_keeps_implied_noise_constant() {
    let s = sched();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h0 = normal_vec(32, &mut rng);
    let mut x = normal_vec(32, &mut rng);
    let cfg = SamplerConfig {
        num_sample_steps: 10,
        zeta: 0.0,
    };
    let mut prev_eps: Option<Vec<f64>> = None;
    for (t, tp) in make_substeps(2000, 10).unwrap() {
        let eps = noise_from_sample(&x, &h0, t, &s).unwrap();
        if let Some(p) = &prev_eps {
            let d = p.iter().zip(&eps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-8, "t={t} drift {d}");
        }
        prev_eps = Some(eps);
        x = ddim_step(&x, &h0, t, tp, &cfg, &s, &mut rng).unwrap();
    }
    assert_eq!(x, h0);
}

#[test]
fn forward_marginal_monte_carlo() {
    let s = sched();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h0 = [0.8, -0.4];
    let draws = 10_000;
    for &t in &[3usize, 250, 900, 1400, 1990] {
        let ab = s.alpha_bar[t];
        let mut samples = [Vec::with_capacity(draws), Vec::with_capacity(draws)];
        for _ in 0..draws {
            let eps = normal_vec(2, &mut rng);
            let x = forward_diffuse(&h0, t, &eps, &s).unwrap();
            samples[0].push(x[0]);
            samples[1].push(x[1]);
        }
        for (k, xs) in samples.iter().enumerate() {
            let n = draws as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let target_var = 1.0 - ab;
            let se_mean = (target_var / n).sqrt();
            let se_var = target_var * (2.0 / (n - 1.0)).sqrt();
            assert!((mean - ab.sqrt() * h0[k]).abs() < 3.0 * se_mean, "t={t} mean {mean}");
            assert!((var - target_var).abs() < 3.0 * se_var, "t={t} var {var}");
        }
    }
}

proptest! {
    #[test]
    fn schedule_invariants(steps in 2usize..3000, lo_exp in -6.0f64..-3.0, span in 1.5f64..200.0) {
        let lo = 10f64.powf(lo_exp);
        let hi = (lo * span).min(0.5);
        let s = make_cosine_schedule(steps, lo, hi).unwrap();
        prop_assert!(s.beta.iter().all(|&b| b >= lo && b <= hi));
        prop_assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(s.alpha_bar.iter().all(|&a| a > 0.0 && a < 1.0 && a.is_finite()));
    }

    #[test]
    fn sigma_monotone_in_zeta(t in 1usize..2000, gap in 1usize..500, z1 in 0.0f64..1.0, z2 in 0.0f64..1.0) {
        let s = sched();
        let tp = t.saturating_sub(gap);
        let (a, b) = (ddim_sigma(t, Some(tp), z1, &s), ddim_sigma(t, Some(tp), z2, &s));
        prop_assert_eq!(z1 <= z2, a <= b);
    }

    #[test]
    fn nmse_invariant_under_unitary_rotation(
        vals in prop::collection::vec(-3.0f64..3.0, 8),
        noise in prop::collection::vec(-1.0f64..1.0, 8),
        theta in 0.0f64..6.3,
    ) {
        prop_assume!(vals.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        // Packed layout [2, 4]: the same phase rotation on every complex entry.
        let rot = |v: &[f64]| -> Vec<f64> {
            let (c, s) = (theta.cos(), theta.sin());
            let mut out = vec![0.0; 8];
            for i in 0..4 {
                out[i] = c * v[i] - s * v[4 + i];
                out[4 + i] = s * v[i] + c * v[4 + i];
            }
            out
        };
        let pred: Vec<f64> = vals.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let before = nmse_db(&vals, &pred, 1).unwrap();
        let after = nmse_db(&rot(&vals), &rot(&pred), 1).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn huber_is_continuous_and_matches_finite_differences(r in -1.0f64..1.0, delta in 0.01f64..0.5) {
        prop_assume!((r.abs() - delta).abs() > 1e-4);
        let h = 1e-6;
        let f = |x: f64| huber_loss(&[0.0], &[x], delta).unwrap();
        let numeric = (f(r + h) - f(r - h)) / (2.0 * h);
        let analytic = if r.abs() <= delta { r } else { delta * r.signum() };
        prop_assert!((numeric - analytic).abs() < 1e-6);
        let at = f(delta);
        prop_assert!((f(delta - 1e-9) - at).abs() < 1e-9 && (f(delta + 1e-9) - at).abs() < 1e-9);
    }
}
