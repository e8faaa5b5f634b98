//! Run configuration: one TOML document with `[data]`, `[model]`,
//! `[training]`, `[scoring]`, `[synth]` and `[eval]` tables plus a top-level
//! `seed`. Unknown keys are rejected. Every artifact records the SHA-256 of
//! the canonical serialization next to the seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datastore::{ContextSchema, LoadOptions, WindowSpec};
use crate::error::{Error, Result};
use crate::evaluation::{AggregationMode, MetricKind};
use crate::model::ModelConfig;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CTXGAT_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Sampling step in seconds; 0 infers it from the file.
    pub step: i64,
    pub fill_gaps: bool,
    /// Train / validation / test fractions used by `synth`.
    pub split: (f64, f64, f64),
    /// Static categorical indices of the monitored element, in schema order.
    pub static_cat: Vec<usize>,
    pub static_real: Vec<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            step: 300,
            fill_gaps: true,
            split: (0.7, 0.15, 0.15),
            static_cat: Vec::new(),
            static_real: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub window: usize,
    pub horizon: usize,
    pub channels: usize,
    pub hidden: usize,
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub context_enabled: bool,
    pub context: ContextSchema,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::telco_default(1);
        Self {
            window: m.window,
            horizon: m.horizon,
            channels: m.channels,
            hidden: m.hidden,
            kernel_size: m.kernel_size,
            leaky_slope: m.leaky_slope,
            context_enabled: m.context_enabled,
            context: m.context,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub clip_norm: f64,
    /// Window stride for training and validation windows.
    pub stride: usize,
    /// Tail share of the training file held out for validation when no
    /// separate validation file is given; 0 trains without validation.
    pub val_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            patience: t.patience,
            clip_norm: t.clip_norm,
            stride: 1,
            val_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    /// Weight of the reconstruction residual.
    pub gamma: f64,
    /// Threshold multiplier.
    pub c: f64,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self { gamma: 1.0, c: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Detector name written into reports.
    pub model_name: String,
    pub modes: Vec<AggregationMode>,
    pub metrics: Vec<MetricKind>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            model_name: "ctxgat".into(),
            modes: AggregationMode::ALL.to_vec(),
            metrics: MetricKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub scoring: ScoringSection,
    pub synth: SynthConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical serialization: every key, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Hex SHA-256 of [`RunConfig::to_toml`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.step < 0 {
            return Err(Error::Config("data.step must be >= 0".into()));
        }
        let (a, b, c) = d.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config("data.split must be three positive fractions summing to 1".into()));
        }
        self.model_config(1)?;
        self.train_config().validate()?;
        let t = &self.training;
        if t.stride == 0 {
            return Err(Error::Config("training.stride must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&t.val_fraction) {
            return Err(Error::Config("training.val_fraction must lie in [0, 1)".into()));
        }
        let s = &self.scoring;
        if !(s.gamma.is_finite() && s.gamma >= 0.0) {
            return Err(Error::Config("scoring.gamma must be finite and >= 0".into()));
        }
        if !(s.c.is_finite() && s.c > 0.0) {
            return Err(Error::Config("scoring.c must be finite and > 0".into()));
        }
        self.synth.validate()?;
        if self.eval.modes.is_empty() || self.eval.metrics.is_empty() {
            return Err(Error::Config("eval.modes and eval.metrics must be non-empty".into()));
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            step: (self.data.step > 0).then_some(self.data.step),
            fill_gaps: self.data.fill_gaps,
        }
    }

    pub fn model_config(&self, n_kpis: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            n_kpis,
            window: m.window,
            horizon: m.horizon,
            channels: m.channels,
            hidden: m.hidden,
            kernel_size: m.kernel_size,
            leaky_slope: m.leaky_slope,
            context: m.context.clone(),
            context_enabled: m.context_enabled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            seed: self.seed,
            patience: t.patience,
            clip_norm: t.clip_norm,
        }
    }

    pub fn train_window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.model.window, self.model.horizon, self.training.stride)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[model]\nwindow = 16\n[scoring]\nc = 8.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.window, 16);
        assert_eq!(cfg.model.horizon, 3);
        assert_eq!(cfg.scoring.c, 8.0);
        assert_eq!(cfg.synth_config().seed, 7);
        assert_ne!(cfg.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 1\n").is_err());
        assert!(RunConfig::from_toml("[training]\nepoch = 3\n").is_err());
        assert!(RunConfig::from_toml("[synth]\nseed = 3\n").is_err());
        assert!(RunConfig::from_toml("[model.context]\nextra = 1\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[scoring]\nc = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[training]\nstride = 0\n").is_err());
        assert!(RunConfig::from_toml("[data]\nsplit = [0.5, 0.5, 0.5]\n").is_err());
        assert!(RunConfig::from_toml("[eval]\nmodes = []\n").is_err());
    }
}
