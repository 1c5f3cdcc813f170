use std::path::{Path, PathBuf};

use csipred::chansim::{default_profiles, load_profiles, CdlProfile, ChannelConfig};
use csipred::error::{Error, Result};
use csipred::evalkit::EvalConfig;
use csipred::nets::{ModelKind, ModelSpec};
use csipred::pipeline::{InferConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

const SECTIONS: [&str; 6] = ["channel", "dataset", "model", "train", "infer", "eval"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub num_samples: usize,
    pub n_past: usize,
    pub n_future: usize,
    #[serde(default = "default_fracs")]
    pub split_fracs: [f64; 3],
    /// Profile table file, relative to the config file; built-in tables when absent.
    #[serde(default)]
    pub profiles: Option<PathBuf>,
}

fn default_fracs() -> [f64; 3] {
    [0.9, 0.05, 0.05]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Widths {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "default_widths")]
    pub widths: Widths,
    /// Defaults to the dataset's `n_past`.
    #[serde(default)]
    pub n_past: Option<usize>,
    /// Defaults to the dataset's `n_future`.
    #[serde(default)]
    pub n_future: Option<usize>,
}

fn default_widths() -> Widths {
    Widths::Desk
}

/// One experiment: every section is required. The top-level seed is copied
/// into the dataset, training, inference and evaluation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub eval: EvalConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn section<T: DeserializeOwned>(obj: &serde_json::Map<String, Value>, name: &str) -> Result<T> {
    let v = obj
        .get(name)
        .ok_or_else(|| Error::config(name, "missing required section"))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::config(name, e.to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::config("<root>", "expected a JSON object"))?;
        if let Some(k) = obj
            .keys()
            .find(|k| !SECTIONS.contains(&k.as_str()) && *k != "schema_version" && *k != "seed")
        {
            return Err(Error::config(k.as_str(), "unknown key"));
        }
        let cfg = Self {
            schema_version: section(obj, "schema_version")?,
            seed: section(obj, "seed")?,
            channel: section(obj, "channel")?,
            dataset: section(obj, "dataset")?,
            model: section(obj, "model")?,
            train: section(obj, "train")?,
            infer: section(obj, "infer")?,
            eval: section(obj, "eval")?,
            base_dir: base_dir.to_path_buf(),
        };
        let seed = cfg.seed;
        cfg.with_seed(seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Replaces the master seed and every stage seed, then re-validates.
    pub fn with_seed(mut self, seed: u64) -> Result<Self> {
        self.seed = seed;
        self.train.seed = seed;
        self.infer.seed = seed;
        self.eval.seed = seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        self.channel.validate()?;
        let d = &self.dataset;
        if d.num_samples == 0 || d.n_past == 0 || d.n_future == 0 {
            return Err(Error::config(
                "dataset",
                "num_samples, n_past and n_future must be at least 1",
            ));
        }
        if d.n_past + d.n_future > self.channel.num_steps {
            return Err(Error::config(
                "dataset.n_past",
                format!(
                    "window of {} frames exceeds channel.num_steps {}",
                    d.n_past + d.n_future,
                    self.channel.num_steps
                ),
            ));
        }
        let spec = self.model_spec();
        spec.validate()?;
        if spec.n_past > d.n_past || spec.n_future > d.n_future {
            return Err(Error::config(
                "model.n_past",
                format!(
                    "model window {}+{} exceeds dataset window {}+{}",
                    spec.n_past, spec.n_future, d.n_past, d.n_future
                ),
            ));
        }
        self.train.validate()?;
        self.infer.validate(self.train.diffusion_steps)?;
        self.eval.validate()?;
        if self.eval.horizon > d.n_future {
            return Err(Error::config(
                "eval.horizon",
                format!("horizon {} exceeds dataset.n_future {}", self.eval.horizon, d.n_future),
            ));
        }
        if let Some(&len) = self.eval.context_lengths.iter().find(|&&l| l > d.n_past) {
            return Err(Error::config(
                "eval.context_lengths",
                format!("context {len} exceeds dataset.n_past {}", d.n_past),
            ));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        let m = &self.model;
        let np = m.n_past.unwrap_or(self.dataset.n_past);
        let nf = m.n_future.unwrap_or(self.dataset.n_future);
        let (nt, nc) = (self.channel.num_tx, self.channel.num_subcarriers_kept);
        match m.widths {
            Widths::Paper => ModelSpec::paper(m.kind, np, nf, nt, nc),
            Widths::Desk => ModelSpec::desk(m.kind, np, nf, nt, nc),
        }
    }

    pub fn profiles(&self) -> Result<Vec<CdlProfile>> {
        match &self.dataset.profiles {
            Some(p) => load_profiles(&self.base_dir.join(p)),
            None => Ok(default_profiles()),
        }
    }
}
