use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PROFILES: &str = include_str!("../../data/cdl_profiles.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub normalized_delay: f64,
    pub power_db: f64,
    pub aod_deg: f64,
    pub aoa_deg: f64,
}

/// Clustered delay-line table: per-cluster delay, power and azimuths plus
/// the intra-cluster ray layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdlProfile {
    pub name: String,
    pub clusters: Vec<Cluster>,
    pub rays_per_cluster: usize,
    /// Unit ray offsets, scaled by the cluster angular spreads below.
    pub ray_offset_deg: Vec<f64>,
    pub cluster_asd_deg: f64,
    pub cluster_asa_deg: f64,
    /// Clusters made of a single specular ray (line of sight).
    #[serde(default)]
    pub specular_clusters: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    profiles: Vec<CdlProfile>,
}

impl CdlProfile {
    pub fn validate(&self) -> Result<()> {
        let at = |f: &str| format!("profile[{}].{f}", self.name);
        if self.clusters.is_empty() {
            return Err(Error::config(at("clusters"), "empty cluster list"));
        }
        if self.rays_per_cluster == 0 || self.ray_offset_deg.len() != self.rays_per_cluster {
            return Err(Error::config(
                at("ray_offset_deg"),
                format!(
                    "{} offsets for {} rays",
                    self.ray_offset_deg.len(),
                    self.rays_per_cluster
                ),
            ));
        }
        if self.clusters.iter().any(|c| !(c.normalized_delay >= 0.0)) {
            return Err(Error::config(at("clusters"), "negative or NaN delay"));
        }
        if !self.clusters.iter().any(|c| c.normalized_delay == 0.0) {
            return Err(Error::config(at("clusters"), "no cluster at delay 0"));
        }
        if let Some(&i) = self.specular_clusters.iter().find(|&&i| i >= self.clusters.len()) {
            return Err(Error::config(
                at("specular_clusters"),
                format!("index {i} out of range"),
            ));
        }
        Ok(())
    }

    /// Linear cluster powers normalised to sum to one.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.clusters.iter().map(|c| 10f64.powf(c.power_db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    pub fn is_specular(&self, cluster: usize) -> bool {
        self.specular_clusters.contains(&cluster)
    }
}

/// The bundled CDL-A..CDL-E tables.
pub fn default_profiles() -> Vec<CdlProfile> {
    parse_profiles(DEFAULT_PROFILES).expect("bundled profile table is valid")
}

pub fn parse_profiles(text: &str) -> Result<Vec<CdlProfile>> {
    let file: ProfileFile = serde_json::from_str(text).map_err(|e| Error::config("profiles", e.to_string()))?;
    for p in &file.profiles {
        p.validate()?;
    }
    Ok(file.profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<CdlProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text)
}

/// Selects profiles by name from the bundled set.
pub fn profiles_by_name(names: &[String]) -> Result<Vec<CdlProfile>> {
    let all = default_profiles();
    names
        .iter()
        .map(|n| {
            all.iter()
                .find(|p| &p.name == n)
                .cloned()
                .ok_or_else(|| Error::config("dataset.profiles", format!("unknown profile `{n}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_are_valid() {
        let p = default_profiles();
        let names: Vec<_> = p.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["CDL-A", "CDL-B", "CDL-C", "CDL-D", "CDL-E"]);
        for prof in &p {
            let s: f64 = prof.normalized_powers().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cluster_list_rejected() {
        let mut p = default_profiles().remove(0);
        p.clusters.clear();
        assert!(matches!(p.validate(), Err(Error::Config { .. })));
    }
}
