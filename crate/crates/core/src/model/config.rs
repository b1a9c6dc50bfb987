use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ConvKind;

/// UNet family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "2d_v1")]
    TwoDV1,
    #[serde(rename = "2d_v2")]
    TwoDV2,
    #[serde(rename = "hybrid")]
    Hybrid,
    #[serde(rename = "mixed")]
    Mixed,
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "ats")]
    Ats,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ats,
        Variant::OneD,
        Variant::Mixed,
        Variant::Hybrid,
        Variant::TwoDV1,
        Variant::TwoDV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TwoDV1 => "2d_v1",
            Variant::TwoDV2 => "2d_v2",
            Variant::Hybrid => "hybrid",
            Variant::Mixed => "mixed",
            Variant::OneD => "1d",
            Variant::Ats => "ats",
        }
    }

    pub fn uses_shift(self) -> bool {
        self == Variant::Ats
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant {s:?} (expected one of 2d_v1, 2d_v2, hybrid, mixed, 1d, ats)"
                ))
            })
    }
}

/// Default channel plan: full-resolution stem width, then one width per
/// down-sampling block.
pub const DEFAULT_STEM_CHANNELS: usize = 4;
pub const DEFAULT_ENCODER_CHANNELS: [usize; 5] = [4, 8, 8, 8, 12];
/// The wide 2D model multiplies every width by this factor.
pub const V2_WIDTH_FACTOR: usize = 4;
pub const DEFAULT_SHIFT_FRACTION: f64 = 0.25;

/// Architecture description, stored as TOML alongside weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Width of the two full-resolution convolutions before the first
    /// down-sampling block; also the width of the last up-sampling block.
    pub stem_channels: usize,
    /// Output width of each down-sampling block (network depth = length).
    pub encoder_channels: Vec<usize>,
    /// Fraction of channels moved in time by each temporal shift.
    pub shift_fraction: f64,
    pub input_bins: usize,
    pub input_frames: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::for_variant(Variant::Ats)
    }
}

/// Position of a convolution inside the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Stem,
    /// Down-sampling block, 1-based.
    Down(usize),
    /// Up-sampling block, 1-based.
    Up(usize),
    Head,
}

impl ModelConfig {
    /// Default plan for a variant; `2d_v2` is four times wider.
    pub fn for_variant(variant: Variant) -> Self {
        let factor = if variant == Variant::TwoDV2 {
            V2_WIDTH_FACTOR
        } else {
            1
        };
        Self {
            variant,
            stem_channels: DEFAULT_STEM_CHANNELS * factor,
            encoder_channels: DEFAULT_ENCODER_CHANNELS
                .iter()
                .map(|c| c * factor)
                .collect(),
            shift_fraction: DEFAULT_SHIFT_FRACTION,
            input_bins: crate::N_BINS - 1,
            input_frames: crate::N_COLS,
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let depth = self.depth();
        if depth == 0 || depth > 10 {
            return Err(Error::InvalidArgument(format!(
                "network depth {depth} outside 1..=10"
            )));
        }
        if self.stem_channels == 0 || self.encoder_channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "channel counts must be positive".into(),
            ));
        }
        if self.input_frames == 0 || self.input_bins == 0 || self.input_bins % (1 << depth) != 0 {
            return Err(Error::InvalidArgument(format!(
                "input bins {} not divisible by 2^{depth}",
                self.input_bins
            )));
        }
        if self.variant.uses_shift() {
            if !(self.shift_fraction > 0.0 && self.shift_fraction <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "shift fraction {} outside (0, 1]",
                    self.shift_fraction
                )));
            }
            if self.stem_channels < 2 || self.encoder_channels.iter().any(|&c| c < 2) {
                return Err(Error::InvalidArgument(
                    "temporal shift needs at least 2 channels per block".into(),
                ));
            }
        }
        Ok(())
    }

    /// Kernel footprint of the `index`-th convolution (0 or 1) of `block`.
    pub fn conv_kind(&self, block: Block, index: usize) -> ConvKind {
        use ConvKind::{OneD, TwoD};
        let depth = self.depth();
        match self.variant {
            Variant::TwoDV1 | Variant::TwoDV2 => TwoD,
            Variant::OneD | Variant::Ats => OneD,
            // Alternates layer by layer, starting with 2D at the top of every block.
            Variant::Hybrid => match block {
                Block::Head => TwoD,
                _ if index == 0 => TwoD,
                _ => OneD,
            },
            // 2D only in the two shallowest levels of each side.
            Variant::Mixed => match block {
                Block::Stem | Block::Head => TwoD,
                Block::Down(i) if i <= 2 => TwoD,
                Block::Up(k) if k + 1 >= depth => TwoD,
                _ => OneD,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(s).map_err(|e| Error::InvalidArgument(format!("model config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for v in Variant::ALL {
            let cfg = ModelConfig::for_variant(v);
            assert_eq!(ModelConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
        assert!(ModelConfig::to_toml(&ModelConfig::default()).contains("variant = \"ats\""));
    }

    #[test]
    fn validation() {
        let mut cfg = ModelConfig::default();
        cfg.input_bins = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.encoder_channels[2] = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::default();
        cfg.shift_fraction = 1.5;
        assert!(cfg.validate().is_err());
        assert!("2d_v3".parse::<Variant>().is_err());
        assert_eq!("hybrid".parse::<Variant>().unwrap(), Variant::Hybrid);
    }

    #[test]
    fn v2_is_four_times_wider() {
        let v1 = ModelConfig::for_variant(Variant::TwoDV1);
        let v2 = ModelConfig::for_variant(Variant::TwoDV2);
        assert_eq!(v2.stem_channels, 4 * v1.stem_channels);
        assert!(v1
            .encoder_channels
            .iter()
            .zip(&v2.encoder_channels)
            .all(|(a, b)| 4 * a == *b));
    }
}

#[cfg(test)]
mod shipped_configs {
    use super::*;

    #[test]
    fn files_match_defaults() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for v in Variant::ALL {
            let cfg = ModelConfig::load(dir.join(format!("{}.toml", v.name()))).unwrap();
            assert_eq!(cfg, ModelConfig::for_variant(v));
        }
        let ats = ModelConfig::load(dir.join("ats.toml")).unwrap();
        assert_eq!(crate::model::count_params_for(&ats), 4257);
    }
}
