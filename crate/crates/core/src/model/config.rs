//! Model configuration and the stage-extent schedule.

use crate::error::{Error, Result};

/// Which output heads the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heads {
    pub classification: bool,
    pub segmentation: bool,
}

impl Default for Heads {
    fn default() -> Self {
        Self { classification: true, segmentation: false }
    }
}

/// Architecture hyperparameters. Defaults follow the Tiny variant:
/// stage depths 3:3:9:3, widths 96/192/384/768, depthwise 7³ kernels and a
/// patchify stem of stride 4.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub stage_depths: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub depthwise_kernel: usize,
    pub stem_patch: usize,
    pub num_classes: usize,
    /// Decoder width of the segmentation head.
    pub seg_channels: usize,
    pub heads: Heads,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            stage_depths: vec![3, 3, 9, 3],
            stage_channels: vec![96, 192, 384, 768],
            depthwise_kernel: 7,
            stem_patch: 4,
            num_classes: 4,
            seg_channels: 128,
            heads: Heads::default(),
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks and smoke training: one block
    /// per stage, widths 4/8/16/32, both heads, narrow decoder.
    pub fn toy(num_classes: usize) -> Self {
        Self {
            in_channels: 1,
            stage_depths: vec![1, 1, 1, 1],
            stage_channels: vec![4, 8, 16, 32],
            depthwise_kernel: 7,
            stem_patch: 4,
            num_classes,
            seg_channels: 8,
            heads: Heads { classification: true, segmentation: true },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_depths.is_empty() || self.stage_depths.len() != self.stage_channels.len() {
            return Err(Error::Config(format!(
                "stage_depths ({}) and stage_channels ({}) must have equal nonzero length",
                self.stage_depths.len(),
                self.stage_channels.len()
            )));
        }
        for (name, v) in [
            ("in_channels", self.in_channels),
            ("depthwise_kernel", self.depthwise_kernel),
            ("stem_patch", self.stem_patch),
            ("num_classes", self.num_classes),
            ("seg_channels", self.seg_channels),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.stage_depths.iter().any(|&d| d == 0) || self.stage_channels.iter().any(|&c| c == 0)
        {
            return Err(Error::Config("stage depths and channels must be positive".into()));
        }
        if !self.heads.classification && !self.heads.segmentation {
            return Err(Error::Config("at least one head must be enabled".into()));
        }
        Ok(())
    }

    pub fn num_stages(&self) -> usize {
        self.stage_depths.len()
    }

    /// Cumulative downsampling factor: stem stride times one 2× transition
    /// per stage after the first.
    pub fn downsample_factor(&self) -> usize {
        self.stem_patch << (self.num_stages() - 1)
    }

    /// Side length of each stage's output for a cubic input of side `s`:
    /// stage i has side `s / (stem_patch · 2^i)`.
    pub fn stage_extents(&self, s: usize) -> Result<Vec<usize>> {
        if s == 0 || s % self.downsample_factor() != 0 {
            return Err(Error::Config(format!(
                "input side {s} is not divisible by the cumulative downsampling {}",
                self.downsample_factor()
            )));
        }
        Ok((0..self.num_stages())
            .map(|i| s / (self.stem_patch << i))
            .collect())
    }
}
