//! TOML run configuration shared by every command.
//!
//! Unknown keys are rejected at every level, omitted keys take their defaults,
//! and any value can be overridden with a dotted `key.path=value` assignment
//! whose right-hand side is parsed as a TOML value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::altsim::SimConfig;
use crate::autoencoder::{ModelConfig, TrainConfig};
use crate::dataset::GenerationConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalSweepConfig;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub shuffle_seed: u64,
    /// Seeds weight initialization.
    pub model_seed: u64,
    /// Fraction of the dataset (taken from the end) held out for validation.
    pub holdout_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: t.adam,
            shuffle_seed: t.shuffle_seed,
            model_seed: 0,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, start_epoch: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
            shuffle_seed: self.shuffle_seed,
            start_epoch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(0).validate()?;
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker thread cap; `None` uses every available core.
    pub threads: Option<usize>,
    pub generation: GenerationConfig,
    pub model: ModelConfig,
    pub training: TrainingSection,
    pub eval: EvalSweepConfig,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.generation.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        self.eval.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Parses `text`, applies `overrides` (`a.b.c=value`), then validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `None` starts from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }
}

/// Sets `path=value` in a TOML table, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override {assignment:?} is not of the form key.path=value"
        ))
    })?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!(
            "override {assignment:?} has an empty key"
        )));
    }
    let raw = raw.trim();
    // Parse as a TOML value; bare words fall back to strings.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {assignment:?}: {k} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml_str("[model]\nkernal_size = 3\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("kernal_size")));
        assert!(RunConfig::from_toml_str("bogus = 1\n", &[]).is_err());
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let cfg = RunConfig::from_toml_str(
            "",
            &[
                "model.kernel_size=100".into(),
                "generation.interference_mode=tones".into(),
                "eval.sir_grid_db=[-10.0, 0.0]".into(),
                "sim.tones.count=3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.kernel_size, 100);
        assert_eq!(cfg.eval.sir_grid_db, vec![-10.0, 0.0]);
        assert_eq!(cfg.sim.tones.count, 3);
        assert!(RunConfig::from_toml_str("", &["model.num_samples=1001".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["nonsense".into()]).is_err());
    }
}
