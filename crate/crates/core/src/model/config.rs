//! Model hyperparameters and the channel-width rules derived from them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. `levels` counts encoder stages; channel
/// widths double per stage from `base_filters`, and the bottleneck sits below
/// the deepest stage with `bottleneck_filters` channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_classes: usize,
    pub base_filters: usize,
    pub levels: usize,
    pub bottleneck_filters: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 4,
            out_classes: 3,
            base_filters: 8,
            levels: 4,
            bottleneck_filters: 128,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 5] = [
            ("in_channels", self.in_channels),
            ("out_classes", self.out_classes),
            ("base_filters", self.base_filters),
            ("levels", self.levels),
            ("bottleneck_filters", self.bottleneck_filters),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("model config: {name} must be >= 1")));
            }
        }
        if self.levels > 8 {
            return Err(Error::Validation(format!(
                "model config: levels = {} is unreasonably deep (max 8)",
                self.levels
            )));
        }
        Ok(())
    }

    /// Channel width of encoder/decoder stage `level` (0 = finest).
    pub fn width(&self, level: usize) -> usize {
        self.base_filters << level
    }

    /// Spatial extents must divide evenly this many times for pooling.
    pub fn downsample_factor(&self) -> usize {
        1 << self.levels
    }
}

/// Group count for normalizing `channels`: 4 when that divides evenly,
/// otherwise a single group.
pub fn norm_groups(channels: usize) -> usize {
    if channels % 4 == 0 {
        4
    } else {
        1
    }
}

/// Intermediate width inside an attention gate over `width`-channel features.
pub fn gate_intermediate(width: usize) -> usize {
    (width / 2).max(1)
}
