use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{generate_channel, CdlProfile, ChannelConfig};
use crate::error::{Error, Result};
use crate::tensorfile::TensorFile;

const KIND: &str = "csi_dataset";

/// Affine map of a single global range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min_val: f64,
    pub max_val: f64,
}

impl MinMaxScaler {
    pub fn fit<'a>(parts: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for part in parts {
            for &v in part {
                lo = lo.min(v as f64);
                hi = hi.max(v as f64);
            }
        }
        if !(hi > lo) {
            return Err(Error::Input(format!("cannot fit scaler on range [{lo}, {hi}]")));
        }
        Ok(Self {
            min_val: lo,
            max_val: hi,
        })
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min_val) / (self.max_val - self.min_val)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * (self.max_val - self.min_val) + self.min_val
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    /// `sqrt(rho) X + N`.
    #[default]
    Literal,
    /// `X + N / sqrt(rho)`.
    Normalized,
}

/// Corrupts `x` with explicit noise samples (one per entry).
pub fn corrupt_with_noise(
    x: &[f32],
    snr_db: f64,
    mode: CorruptionMode,
    noise: impl IntoIterator<Item = f64>,
) -> Vec<f32> {
    let root_rho = 10f64.powf(snr_db / 20.0);
    let (a, b) = match mode {
        CorruptionMode::Literal => (root_rho, 1.0),
        CorruptionMode::Normalized => (1.0, 1.0 / root_rho),
    };
    x.iter()
        .zip(noise)
        .map(|(&v, n)| (a * v as f64 + b * n) as f32)
        .collect()
}

pub fn corrupt_with_snr_mode<R: Rng + ?Sized>(x: &[f32], snr_db: f64, mode: CorruptionMode, rng: &mut R) -> Vec<f32> {
    let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    corrupt_with_noise(x, snr_db, mode, noise)
}

/// `sqrt(rho) X + N` with `rho = 10^(snr_db/10)` and standard normal `N`.
pub fn corrupt_with_snr<R: Rng + ?Sized>(x: &[f32], snr_db: f64, rng: &mut R) -> Vec<f32> {
    corrupt_with_snr_mode(x, snr_db, CorruptionMode::Literal, rng)
}

/// One split: `x` is `[len, n_past, 2, N_t, N_c]`, `y` is `[len, n_future, 2, N_t, N_c]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub len: usize,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub channel: ChannelConfig,
    pub profiles: Vec<CdlProfile>,
    pub num_samples: usize,
    pub n_past: usize,
    pub n_future: usize,
    pub split_fracs: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub n_past: usize,
    pub n_future: usize,
    pub num_tx: usize,
    pub num_sc: usize,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub scaler: MinMaxScaler,
    pub provenance: Provenance,
}

impl DatasetBundle {
    /// Elements in one packed frame, `2 * N_t * N_c`.
    pub fn frame_len(&self) -> usize {
        2 * self.num_tx * self.num_sc
    }

    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// Sizes of the train/val/test splits; the test split takes the remainder.
pub fn split_sizes(num_samples: usize, fracs: [f64; 3]) -> Result<[usize; 3]> {
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "dataset.split_fracs",
            format!("{fracs:?} must be in [0,1] and sum to 1"),
        ));
    }
    let train = ((fracs[0] * num_samples as f64).round() as usize).min(num_samples);
    let val = ((fracs[1] * num_samples as f64).round() as usize).min(num_samples - train);
    if train == 0 {
        return Err(Error::config(
            "dataset.split_fracs",
            format!("{num_samples} samples give an empty train split"),
        ));
    }
    Ok([train, val, num_samples - train - val])
}

/// Raw (unscaled) past/future windows, one independent sequence per sample.
fn generate_windows(
    cfg: &ChannelConfig,
    profiles: &[CdlProfile],
    num_samples: usize,
    n_past: usize,
    n_future: usize,
    seed: u64,
) -> Result<(Vec<f32>, Vec<f32>)> {
    cfg.validate()?;
    if profiles.is_empty() {
        return Err(Error::config("dataset.profiles", "no profiles selected"));
    }
    if n_past == 0 || n_future == 0 || n_past + n_future > cfg.num_steps {
        return Err(Error::config(
            "dataset.n_past",
            format!(
                "n_past {n_past} + n_future {n_future} must be positive and fit in {} steps",
                cfg.num_steps
            ),
        ));
    }
    let frame = 2 * cfg.num_tx * cfg.num_subcarriers_kept;
    let window = n_past + n_future;
    let mut xs = Vec::with_capacity(num_samples * n_past * frame);
    let mut ys = Vec::with_capacity(num_samples * n_future * frame);
    for i in 0..num_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
        let profile = &profiles[rng.random_range(0..profiles.len())];
        let [v_lo, v_hi] = cfg.velocity_range_kmh;
        let [d_lo, d_hi] = cfg.delay_spread_range_ns;
        let velocity = if v_hi > v_lo {
            rng.random_range(v_lo..=v_hi)
        } else {
            v_lo
        };
        let spread = if d_hi > d_lo {
            rng.random_range(d_lo..=d_hi)
        } else {
            d_lo
        };
        let start = rng.random_range(0..=cfg.num_steps - window);
        let channel_seed = rng.random::<u64>();
        let seq = generate_channel(profile, cfg, velocity, spread, channel_seed)?;
        let packed = seq.packed();
        let past = &packed[start * frame..(start + n_past) * frame];
        let future = &packed[(start + n_past) * frame..(start + window) * frame];
        xs.extend(past.iter().map(|&v| v as f32));
        ys.extend(future.iter().map(|&v| v as f32));
    }
    Ok((xs, ys))
}

/// A stand-alone evaluation split scaled with an existing (training) scaler.
pub fn build_eval_split(
    cfg: &ChannelConfig,
    profiles: &[CdlProfile],
    num_samples: usize,
    n_past: usize,
    n_future: usize,
    seed: u64,
    scaler: &MinMaxScaler,
) -> Result<Split> {
    let (mut x, mut y) = generate_windows(cfg, profiles, num_samples, n_past, n_future, seed)?;
    for v in x.iter_mut().chain(y.iter_mut()) {
        *v = scaler.scale(*v as f64) as f32;
    }
    Ok(Split { len: num_samples, x, y })
}

/// Generates `num_samples` independent sequences and cuts one past/future
/// window from each.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    cfg: &ChannelConfig,
    profiles: &[CdlProfile],
    num_samples: usize,
    n_past: usize,
    n_future: usize,
    split_fracs: [f64; 3],
    seed: u64,
) -> Result<DatasetBundle> {
    let sizes = split_sizes(num_samples, split_fracs)?;
    let frame = 2 * cfg.num_tx * cfg.num_subcarriers_kept;
    let (xs, ys) = generate_windows(cfg, profiles, num_samples, n_past, n_future, seed)?;
    let (xf, yf) = (n_past * frame, n_future * frame);
    let cut = |lo: usize, hi: usize| Split {
        len: hi - lo,
        x: xs[lo * xf..hi * xf].to_vec(),
        y: ys[lo * yf..hi * yf].to_vec(),
    };
    let (a, b) = (sizes[0], sizes[0] + sizes[1]);
    let (mut train, mut val, mut test) = (cut(0, a), cut(a, b), cut(b, num_samples));
    let scaler = MinMaxScaler::fit([train.x.as_slice(), train.y.as_slice()])?;
    for split in [&mut train, &mut val, &mut test] {
        for v in split.x.iter_mut().chain(split.y.iter_mut()) {
            *v = scaler.scale(*v as f64) as f32;
        }
    }
    Ok(DatasetBundle {
        n_past,
        n_future,
        num_tx: cfg.num_tx,
        num_sc: cfg.num_subcarriers_kept,
        train,
        val,
        test,
        scaler,
        provenance: Provenance {
            channel: cfg.clone(),
            profiles: profiles.to_vec(),
            num_samples,
            n_past,
            n_future,
            split_fracs,
            seed,
        },
    })
}

pub fn dataset_to_file(bundle: &DatasetBundle) -> TensorFile {
    let meta = json!({
        "n_past": bundle.n_past,
        "n_future": bundle.n_future,
        "num_tx": bundle.num_tx,
        "num_sc": bundle.num_sc,
        "scaler": bundle.scaler,
        "provenance": bundle.provenance,
    });
    let mut f = TensorFile::new(KIND, meta);
    let frame = [2, bundle.num_tx, bundle.num_sc];
    for (name, split) in [("train", &bundle.train), ("val", &bundle.val), ("test", &bundle.test)] {
        let shape = |steps: usize| [&[split.len, steps][..], &frame[..]].concat();
        f.insert(format!("{name}_x"), shape(bundle.n_past), split.x.clone());
        f.insert(format!("{name}_y"), shape(bundle.n_future), split.y.clone());
    }
    f
}

pub fn dataset_from_file(mut f: TensorFile, path: &Path) -> Result<DatasetBundle> {
    let corrupt = |msg: String| Error::Corrupt {
        path: path.to_path_buf(),
        msg,
    };
    if f.kind != KIND {
        return Err(corrupt(format!("file kind `{}` is not a dataset", f.kind)));
    }
    let field = |key: &str| {
        f.meta
            .get(key)
            .cloned()
            .ok_or_else(|| corrupt(format!("header missing `{key}`")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        field(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| corrupt(format!("`{key}` is not an integer")))
    };
    let (n_past, n_future, num_tx, num_sc) = (
        get_usize("n_past")?,
        get_usize("n_future")?,
        get_usize("num_tx")?,
        get_usize("num_sc")?,
    );
    let scaler: MinMaxScaler = serde_json::from_value(field("scaler")?).map_err(|e| corrupt(e.to_string()))?;
    let provenance: Provenance = serde_json::from_value(field("provenance")?).map_err(|e| corrupt(e.to_string()))?;
    let mut take = |name: &str, steps: usize| -> Result<(usize, Vec<f32>)> {
        let (shape, data) = f.take(name, path)?;
        if shape.len() != 5 || shape[1..] != [steps, 2, num_tx, num_sc] {
            return Err(corrupt(format!("array `{name}` has shape {shape:?}")));
        }
        Ok((shape[0], data))
    };
    let mut split = |name: &str| -> Result<Split> {
        let (len, x) = take(&format!("{name}_x"), n_past)?;
        let (len_y, y) = take(&format!("{name}_y"), n_future)?;
        if len != len_y {
            return Err(corrupt(format!(
                "split `{name}` has {len} contexts but {len_y} targets"
            )));
        }
        Ok(Split { len, x, y })
    };
    let (train, val, test) = (split("train")?, split("val")?, split("test")?);
    Ok(DatasetBundle {
        n_past,
        n_future,
        num_tx,
        num_sc,
        train,
        val,
        test,
        scaler,
        provenance,
    })
}

pub fn write_dataset(bundle: &DatasetBundle, path: &Path) -> Result<()> {
    dataset_to_file(bundle).write(path)
}

pub fn read_dataset(path: &Path) -> Result<DatasetBundle> {
    dataset_from_file(TensorFile::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansim::default_profiles;

    fn small_cfg() -> ChannelConfig {
        ChannelConfig {
            num_tx: 4,
            num_subcarriers_kept: 4,
            num_steps: 12,
            ..Default::default()
        }
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10, [0.8, 0.1, 0.1]).unwrap(), [8, 1, 1]);
        assert_eq!(split_sizes(2000, [0.9, 0.05, 0.05]).unwrap(), [1800, 100, 100]);
        assert!(split_sizes(1, [0.2, 0.4, 0.4]).is_err());
        assert!(split_sizes(10, [0.5, 0.1, 0.1]).is_err());
    }

    #[test]
    fn corrupt_literal_examples() {
        let x = [0.5f32, -1.0, 2.0];
        assert_eq!(
            corrupt_with_noise(&x, 0.0, CorruptionMode::Literal, [0.0; 3]),
            x.to_vec()
        );
        let y = corrupt_with_noise(&x, 20.0, CorruptionMode::Literal, [1.0, -2.0, 0.5]);
        assert_eq!(y, vec![6.0, -12.0, 20.5]);
        let z = corrupt_with_noise(&x, 20.0, CorruptionMode::Normalized, [1.0, -2.0, 0.5]);
        assert_eq!(z, vec![0.6, -1.2, 2.05]);
    }

    #[test]
    fn default_shapes_and_scaling() {
        let cfg = small_cfg();
        let b = build_dataset(&cfg, &default_profiles(), 10, 5, 3, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((b.train.len, b.val.len, b.test.len), (8, 1, 1));
        assert_eq!(b.train.x.len(), 8 * 5 * 2 * 4 * 4);
        assert_eq!(b.test.y.len(), 3 * 2 * 4 * 4);
        let all = b.train.x.iter().chain(&b.train.y);
        let (lo, hi) = all.fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo.abs() < 1e-6 && (hi - 1.0).abs() < 1e-6, "{lo} {hi}");
    }

    #[test]
    fn file_round_trip_and_determinism() {
        let cfg = small_cfg();
        let a = build_dataset(&cfg, &default_profiles(), 6, 4, 2, [0.5, 0.25, 0.25], 11).unwrap();
        let b = build_dataset(&cfg, &default_profiles(), 6, 4, 2, [0.5, 0.25, 0.25], 11).unwrap();
        let (fa, fb) = (dataset_to_file(&a).to_bytes(), dataset_to_file(&b).to_bytes());
        assert_eq!(fa, fb);
        let back = dataset_from_file(TensorFile::from_bytes(&fa, Path::new("mem")).unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn window_too_long_is_config_error() {
        let e = build_dataset(&small_cfg(), &default_profiles(), 4, 10, 5, [1.0, 0.0, 0.0], 0).unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
    }
}
