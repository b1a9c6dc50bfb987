//! Run settings shared by the subcommands.
//!
//! Values come from command-line flags, then an optional TOML file, then the
//! built-in defaults, in that order of precedence.

use std::path::Path;

use atsunet::model::{Variant, DEFAULT_SHIFT_FRACTION};
use atsunet::train::TrainConfig;
use atsunet::{Error, Result};
use serde::Deserialize;

/// Optional settings as read from a config file or flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub shift_fraction: Option<f64>,
    pub quantize: Option<bool>,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            Error::InvalidArgument(format!("config {}: {}", path.display(), e.message()))
        })
    }

    /// Fields set in `self` win over fields set in `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            variant: self.variant.or(lower.variant),
            seed: self.seed.or(lower.seed),
            epochs: self.epochs.or(lower.epochs),
            batch: self.batch.or(lower.batch),
            lr: self.lr.or(lower.lr),
            shift_fraction: self.shift_fraction.or(lower.shift_fraction),
            quantize: self.quantize.or(lower.quantize),
        }
    }
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub shift_fraction: f64,
    pub quantize: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            variant: Variant::Ats,
            seed: t.seed,
            epochs: t.epochs,
            batch: t.batch,
            lr: t.lr,
            shift_fraction: DEFAULT_SHIFT_FRACTION,
            quantize: false,
        }
    }
}

impl RunConfig {
    /// Resolves flags over an optional config file over defaults.
    pub fn resolve(flags: Overrides, file: Option<&Path>) -> Result<Self> {
        let file = match file {
            Some(p) => Overrides::load(p)?,
            None => Overrides::default(),
        };
        let o = flags.over(file);
        let d = Self::default();
        let cfg = Self {
            variant: o.variant.unwrap_or(d.variant),
            seed: o.seed.unwrap_or(d.seed),
            epochs: o.epochs.unwrap_or(d.epochs),
            batch: o.batch.unwrap_or(d.batch),
            lr: o.lr.unwrap_or(d.lr),
            shift_fraction: o.shift_fraction.unwrap_or(d.shift_fraction),
            quantize: o.quantize.unwrap_or(d.quantize),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} is invalid",
                self.lr
            )));
        }
        if !(self.shift_fraction > 0.0 && self.shift_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "shift fraction {} must lie in (0, 1]",
                self.shift_fraction
            )));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seed: self.seed,
        }
    }
}
