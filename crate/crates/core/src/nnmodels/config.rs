//! Model configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ResNetConfig {
    pub input_len: usize,
    pub stem_channels: usize,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub kernel: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub head_hidden: usize,
    pub dropout_p: f64,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        ResNetConfig {
            input_len: 4096,
            stem_channels: 64,
            stage_channels: vec![64, 128, 256, 512],
            blocks_per_stage: 2,
            kernel: 3,
            feature_dim: 512,
            num_classes: 4,
            head_hidden: 256,
            dropout_p: 0.5,
        }
    }
}

impl ResNetConfig {
    /// Small configuration for CPU-scale experiments.
    pub fn desk() -> Self {
        ResNetConfig {
            input_len: 1024,
            stem_channels: 16,
            stage_channels: vec![16, 32, 64, 128],
            blocks_per_stage: 1,
            feature_dim: 128,
            ..ResNetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() || self.blocks_per_stage == 0 {
            return Err(Error::config("resnet needs stages and blocks"));
        }
        if self.feature_dim != *self.stage_channels.last().unwrap() {
            return Err(Error::config(format!(
                "feature_dim {} must equal last stage channels {}",
                self.feature_dim,
                self.stage_channels.last().unwrap()
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::config("kernel must be odd and positive"));
        }
        if self.num_classes < 2 || self.head_hidden == 0 || self.input_len == 0 {
            return Err(Error::config("invalid head/input dimensions"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p must be in [0, 1)"));
        }
        Ok(())
    }
}
