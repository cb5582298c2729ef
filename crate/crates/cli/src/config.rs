//! TOML run configuration. Every table and key is optional; command-line
//! flags override file values, which override the library defaults.
//!
//! ```toml
//! [consistency]
//! tnorm = "godel"
//! tau_f = 0.5
//!
//! [membership]
//! family = "trapezoidal"
//! a = 0.0
//! b = 0.5
//!
//! [train]
//! epochs = 40
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use hierbelief::budget::BudgetConfig;
use hierbelief::consistency::ConsistencyConfig;
use hierbelief::decode::DecodeConfig;
use hierbelief::fuzzy::{MembershipFn, TNorm};
use hierbelief::train::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub consistency: ConsistencySection,
    pub membership: Option<MembershipFn>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub decode: DecodeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencySection {
    pub tnorm: Option<TNorm>,
    pub tau_f: Option<f64>,
    pub tau_c: Option<f64>,
    pub normalize_weights: Option<bool>,
    pub exclude_omega: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub warmup_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub early_stop_patience: Option<usize>,
    pub val_fraction: Option<f64>,
    pub disable_consistency: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub k: Option<usize>,
    pub max_cardinality: Option<usize>,
    pub min_label_frequency: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    pub tau_f: Option<f64>,
    pub tau_c: Option<f64>,
}

/// Raised for configuration files that do not parse.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<(Self, Option<Vec<u8>>)> {
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = String::from_utf8_lossy(&bytes);
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        Ok((cfg, Some(bytes)))
    }

    pub fn consistency(&self) -> hierbelief::Result<ConsistencyConfig> {
        let d = ConsistencyConfig::default();
        let s = &self.consistency;
        let cfg = ConsistencyConfig {
            tnorm: s.tnorm.unwrap_or(d.tnorm),
            membership: self.membership.unwrap_or(d.membership),
            tau_f: s.tau_f.unwrap_or(d.tau_f),
            tau_c: s.tau_c.unwrap_or(d.tau_c),
            normalize_weights: s.normalize_weights.unwrap_or(d.normalize_weights),
            exclude_omega: s.exclude_omega.unwrap_or(d.exclude_omega),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        let s = &self.train;
        TrainConfig {
            epochs: s.epochs.unwrap_or(d.epochs),
            warmup_epochs: s.warmup_epochs.unwrap_or(d.warmup_epochs),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
            seed,
            early_stop_patience: s.early_stop_patience.unwrap_or(d.early_stop_patience),
            disable_consistency: s.disable_consistency.unwrap_or(d.disable_consistency),
        }
    }

    pub fn val_fraction(&self) -> f64 {
        self.train.val_fraction.unwrap_or(0.2)
    }

    pub fn budget(&self, n_fine: usize, seed: u64) -> BudgetConfig {
        let d = BudgetConfig::for_space(n_fine);
        let s = &self.budget;
        BudgetConfig {
            k: s.k.unwrap_or(d.k),
            max_cardinality: s.max_cardinality.unwrap_or(d.max_cardinality),
            min_label_frequency: s.min_label_frequency.unwrap_or(d.min_label_frequency),
            seed,
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
        }
    }

    pub fn decode(&self) -> DecodeConfig {
        let d = DecodeConfig::default();
        DecodeConfig {
            tau_f: self.decode.tau_f.unwrap_or(d.tau_f),
            tau_c: self.decode.tau_c.unwrap_or(d.tau_c),
        }
    }
}
