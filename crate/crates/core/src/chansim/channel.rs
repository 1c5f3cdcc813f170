use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CdlProfile, ChannelConfig};
use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array steering vector with unit L2 norm.
pub fn array_response(phi: f64, num_elems: usize, spacing_ratio: f64) -> Result<Vec<Complex64>> {
    if !phi.is_finite() {
        return Err(Error::Input(format!("array_response: non-finite angle {phi}")));
    }
    if num_elems == 0 {
        return Err(Error::Input("array_response: zero elements".into()));
    }
    let norm = 1.0 / (num_elems as f64).sqrt();
    let step = 2.0 * PI * spacing_ratio * phi.sin();
    Ok((0..num_elems)
        .map(|k| Complex64::from_polar(norm, step * k as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGainParams {
    pub power_linear: f64,
    pub doppler_cycles_per_step: f64,
    pub init_phase_rad: f64,
}

/// `sqrt(P) * exp(j (2 pi f n + phi))`.
pub fn path_gain(p: &PathGainParams, n: usize) -> Complex64 {
    let phase = 2.0 * PI * p.doppler_cycles_per_step * n as f64 + p.init_phase_rad;
    Complex64::from_polar(p.power_linear.sqrt(), phase)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub profile: String,
    pub velocity_kmh: f64,
    pub delay_spread_ns: f64,
    pub seed: u64,
}

/// Complex channel evolution laid out `[steps, num_tx, num_subcarriers]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSequence {
    pub steps: usize,
    pub num_tx: usize,
    pub num_sc: usize,
    pub data: Vec<Complex64>,
    pub meta: SequenceMeta,
}

impl CsiSequence {
    pub fn at(&self, n: usize, k: usize, m: usize) -> Complex64 {
        self.data[(n * self.num_tx + k) * self.num_sc + m]
    }

    /// Real/imaginary view `[steps, 2, num_tx, num_subcarriers]`.
    pub fn packed(&self) -> Vec<f64> {
        let plane = self.num_tx * self.num_sc;
        let mut out = vec![0.0; self.steps * 2 * plane];
        for n in 0..self.steps {
            for i in 0..plane {
                let z = self.data[n * plane + i];
                out[(2 * n) * plane + i] = z.re;
                out[(2 * n + 1) * plane + i] = z.im;
            }
        }
        out
    }

    pub fn from_packed(packed: &[f64], num_tx: usize, num_sc: usize, meta: SequenceMeta) -> Result<Self> {
        let plane = num_tx * num_sc;
        if plane == 0 || !packed.len().is_multiple_of(2 * plane) {
            return Err(Error::Input(format!(
                "packed length {} is not a multiple of 2x{num_tx}x{num_sc}",
                packed.len()
            )));
        }
        let steps = packed.len() / (2 * plane);
        let data = (0..steps * plane)
            .map(|j| {
                let (n, i) = (j / plane, j % plane);
                Complex64::new(packed[2 * n * plane + i], packed[(2 * n + 1) * plane + i])
            })
            .collect();
        Ok(Self {
            steps,
            num_tx,
            num_sc,
            data,
            meta,
        })
    }
}

struct Ray {
    gain: PathGainParams,
    tx_conj: Vec<Complex64>,
}

/// Simulates one channel realisation. All randomness (travel direction and
/// per-ray initial phases) comes from a stream seeded with `seed`.
pub fn generate_channel(
    profile: &CdlProfile,
    cfg: &ChannelConfig,
    velocity_kmh: f64,
    delay_spread_ns: f64,
    seed: u64,
) -> Result<CsiSequence> {
    profile.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let travel_dir = rng.random_range(0.0..2.0 * PI);
    let speed = velocity_kmh / 3.6;
    let max_doppler = speed / SPEED_OF_LIGHT * cfg.carrier_freq_hz * cfg.symbol_duration_s;
    let freqs = cfg.subcarrier_freqs_hz();
    let powers = profile.normalized_powers();
    let (nt, nc, steps) = (cfg.num_tx, cfg.num_subcarriers_kept, cfg.num_steps);

    let mut data = vec![Complex64::new(0.0, 0.0); steps * nt * nc];
    let mut cluster_sum = vec![Complex64::new(0.0, 0.0); steps * nt];
    for (l, cluster) in profile.clusters.iter().enumerate() {
        let offsets: Vec<f64> = if profile.is_specular(l) {
            vec![0.0]
        } else {
            profile.ray_offset_deg.clone()
        };
        let ray_power = powers[l] / offsets.len() as f64;
        let mut rays = Vec::with_capacity(offsets.len());
        for off in &offsets {
            let aod = (cluster.aod_deg + profile.cluster_asd_deg * off).to_radians();
            let aoa = (cluster.aoa_deg + profile.cluster_asa_deg * off).to_radians();
            let tx_conj = array_response(aod, nt, cfg.antenna_spacing_ratio)?
                .into_iter()
                .map(|z| z.conj())
                .collect();
            rays.push(Ray {
                gain: PathGainParams {
                    power_linear: ray_power,
                    doppler_cycles_per_step: max_doppler * (aoa - travel_dir).cos(),
                    init_phase_rad: rng.random_range(0.0..2.0 * PI),
                },
                tx_conj,
            });
        }
        // Sum the rays of this cluster per (step, antenna), then spread over
        // subcarriers with the cluster's delay phase ramp.
        cluster_sum.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for ray in &rays {
            for n in 0..steps {
                let g = path_gain(&ray.gain, n);
                for (acc, &a) in cluster_sum[n * nt..(n + 1) * nt].iter_mut().zip(&ray.tx_conj) {
                    *acc += g * a;
                }
            }
        }
        let tau = cluster.normalized_delay * delay_spread_ns * 1e-9;
        let ramp: Vec<Complex64> = freqs
            .iter()
            .map(|f| Complex64::from_polar(1.0, -2.0 * PI * f * tau))
            .collect();
        for (row, &s) in data.chunks_mut(nc).zip(&cluster_sum) {
            for (h, &r) in row.iter_mut().zip(&ramp) {
                *h += s * r;
            }
        }
    }
    Ok(CsiSequence {
        steps,
        num_tx: nt,
        num_sc: nc,
        data,
        meta: SequenceMeta {
            profile: profile.name.clone(),
            velocity_kmh,
            delay_spread_ns,
            seed,
        },
    })
}
