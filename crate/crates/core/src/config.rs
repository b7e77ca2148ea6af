//! Run configuration and the per-module views derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How query points are batched through the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    /// Each query point tracked on its own.
    One,
    /// All query points tracked jointly.
    #[default]
    All,
}

/// Auxiliary points tracked alongside the queries and dropped from the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SupportMode {
    pub local: bool,
    pub global: bool,
}

impl SupportMode {
    pub const NONE: Self = Self {
        local: false,
        global: false,
    };
    pub const LOCAL: Self = Self {
        local: true,
        global: false,
    };
    pub const GLOBAL: Self = Self {
        local: false,
        global: true,
    };
    pub const BOTH: Self = Self {
        local: true,
        global: true,
    };
}

/// Every knob of a run. Dumped next to every output for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Sliding window length `S`.
    pub window: usize,
    /// Feature downsampling factor `s`.
    pub stride: usize,
    /// Correlation lookup radius `r`.
    pub radius: usize,
    /// Correlation pyramid levels `l`.
    pub levels: usize,
    /// Feature channels `c_f`.
    pub feature_dim: usize,
    /// Motion encoding channels `c_o`.
    pub motion_dim: usize,
    /// Intermediate head channels `c_i`.
    pub intermediate_dim: usize,
    /// Transformer width `c_t`.
    pub transformer_dim: usize,
    /// Cross-time/cross-space block pairs `M`.
    pub block_pairs: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Encoder stage widths (stem/stage 1, stage 2, stages 3-4).
    pub encoder_widths: [usize; 3],
    /// Refinement iterations `n`.
    pub iterations: usize,
    /// Lower clamp for predicted depth (m).
    pub min_depth: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mode: InferenceMode,
    pub support: SupportMode,
    pub weight_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window: 16,
            stride: 8,
            radius: 3,
            levels: 4,
            feature_dim: 128,
            motion_dim: 128,
            intermediate_dim: 128,
            transformer_dim: 384,
            block_pairs: 6,
            heads: 8,
            mlp_ratio: 4,
            encoder_widths: [64, 96, 128],
            iterations: 4,
            min_depth: 1e-3,
            gamma: 0.8,
            alpha: 250.0,
            mode: InferenceMode::All,
            support: SupportMode::NONE,
            weight_seed: None,
        }
    }
}

impl RunConfig {
    /// Width of the appearance correlation feature, `l * (2r + 1)^2`.
    pub fn correlation_dim(&self) -> usize {
        self.levels * (2 * self.radius + 1).pow(2)
    }

    /// Width of the concatenated updater input:
    /// correlation + depth residual + (2 + c_o) appearance motion + depth motion.
    pub fn updater_input_dim(&self) -> usize {
        self.correlation_dim() + 1 + (2 + self.motion_dim) + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.window < 2 || !self.window.is_multiple_of(2) {
            return fail("window size must be even and >= 2");
        }
        if self.stride == 0 || !self.stride.is_power_of_two() {
            return fail("stride must be a power of two");
        }
        if self.levels == 0 {
            return fail("need at least one pyramid level");
        }
        if !self.motion_dim.is_multiple_of(4) {
            return fail("motion_dim must be divisible by 4");
        }
        if !self.transformer_dim.is_multiple_of(4) || self.heads == 0 || !self.transformer_dim.is_multiple_of(self.heads) {
            return fail("transformer_dim must be divisible by 4 and by heads");
        }
        if self.iterations == 0 {
            return fail("need at least one iteration");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || self.alpha <= 0.0 {
            return fail("loss weights out of range");
        }
        if self.min_depth <= 0.0 {
            return fail("min_depth must be positive");
        }
        if self.feature_dim == 0 || self.intermediate_dim == 0 || self.encoder_widths.contains(&0) {
            return fail("zero-width layer");
        }
        Ok(())
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            widths: self.encoder_widths,
            feature_dim: self.feature_dim,
        }
    }

    pub fn updater(&self) -> UpdaterConfig {
        UpdaterConfig {
            input_dim: self.updater_input_dim(),
            width: self.transformer_dim,
            block_pairs: self.block_pairs,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            intermediate_dim: self.intermediate_dim,
            template_dim: self.feature_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub widths: [usize; 3],
    pub feature_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        RunConfig::default().encoder()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdaterConfig {
    pub input_dim: usize,
    /// `c_t`
    pub width: usize,
    /// `M`
    pub block_pairs: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// `c_i`
    pub intermediate_dim: usize,
    /// `c_f`
    pub template_dim: usize,
}

impl Default for UpdaterConfig {
    fn default() -> Self {
        RunConfig::default().updater()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_expected_widths() {
        let c = RunConfig::default();
        assert_eq!(c.correlation_dim(), 196);
        assert_eq!(c.updater_input_dim(), 328);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut c = RunConfig::default();
        c.mode = InferenceMode::One;
        c.support = SupportMode::BOTH;
        c.weight_seed = Some(7);
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_odd_window() {
        let c = RunConfig {
            window: 15,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
