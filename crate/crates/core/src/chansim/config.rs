use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Link and sampling parameters of the simulated channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub carrier_freq_hz: f64,
    pub num_tx: usize,
    pub num_rx: usize,
    pub num_subcarriers_total: usize,
    pub num_subcarriers_kept: usize,
    pub symbol_duration_s: f64,
    pub num_steps: usize,
    pub antenna_spacing_ratio: f64,
    pub velocity_range_kmh: [f64; 2],
    pub delay_spread_range_ns: [f64; 2],
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 28e9,
            num_tx: 16,
            num_rx: 1,
            num_subcarriers_total: 300,
            num_subcarriers_kept: 16,
            symbol_duration_s: 33.3e-6,
            num_steps: 100,
            antenna_spacing_ratio: 0.5,
            velocity_range_kmh: [30.0, 120.0],
            delay_spread_range_ns: [50.0, 400.0],
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::config(format!("channel.{field}"), msg));
        for (name, v) in [
            ("num_tx", self.num_tx),
            ("num_subcarriers_total", self.num_subcarriers_total),
            ("num_subcarriers_kept", self.num_subcarriers_kept),
            ("num_steps", self.num_steps),
        ] {
            if v == 0 {
                return err(name, "must be at least 1".into());
            }
        }
        if self.num_rx != 1 {
            return err(
                "num_rx",
                format!("only a single receive antenna is modelled, got {}", self.num_rx),
            );
        }
        if self.num_subcarriers_kept > self.num_subcarriers_total {
            return err(
                "num_subcarriers_kept",
                format!(
                    "{} exceeds the {} subcarrier grid",
                    self.num_subcarriers_kept, self.num_subcarriers_total
                ),
            );
        }
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("symbol_duration_s", self.symbol_duration_s),
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(name, format!("must be positive and finite, got {v}"));
            }
        }
        for (name, [lo, hi]) in [
            ("velocity_range_kmh", self.velocity_range_kmh),
            ("delay_spread_range_ns", self.delay_spread_range_ns),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return err(name, format!("need 0 <= lower <= upper, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Evenly spaced kept subcarrier indices starting at 0. When the grid
    /// size is not a multiple of the kept count the stride is rounded down.
    pub fn kept_subcarriers(&self) -> Vec<usize> {
        let stride = self.num_subcarriers_total / self.num_subcarriers_kept;
        (0..self.num_subcarriers_kept).map(|m| m * stride).collect()
    }

    /// Baseband frequency offset of each kept subcarrier in Hz.
    pub fn subcarrier_freqs_hz(&self) -> Vec<f64> {
        let spacing = 1.0 / self.symbol_duration_s;
        self.kept_subcarriers().iter().map(|&i| i as f64 * spacing).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_stride() {
        let cfg = ChannelConfig::default();
        cfg.validate().unwrap();
        let idx = cfg.kept_subcarriers();
        assert_eq!(idx.len(), 16);
        assert_eq!(idx[0], 0);
        assert!(idx.windows(2).all(|w| w[1] - w[0] == 18));
    }

    #[test]
    fn rejects_inverted_range() {
        let cfg = ChannelConfig {
            velocity_range_kmh: [50.0, 10.0],
            ..Default::default()
        };
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("channel.velocity_range_kmh"));
    }
}
