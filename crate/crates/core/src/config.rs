//! Registration parameters shared by the initial alignment and the
//! deformable stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which count ranks exhaustive-search candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// RANSAC inliers.
    #[default]
    Inliers,
    /// Raw descriptor matches.
    Matches,
}

/// One level of the deformable pyramid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelConfig {
    /// Level size as a fraction of the working resolution.
    pub scale: f64,
    /// Weight of the diffusive regularizer.
    pub theta: f64,
    pub iterations: usize,
    /// Adam learning rate, in pixels of this level.
    pub step_size: f64,
    pub mi_bins: usize,
    pub mi_window: usize,
    pub mi_stride: usize,
}

impl Default for LevelConfig {
    fn default() -> Self {
        Self::with_scale(1.0)
    }
}

impl LevelConfig {
    pub fn with_scale(scale: f64) -> Self {
        Self {
            scale,
            theta: 5.0,
            iterations: 100,
            step_size: 0.5,
            mi_bins: 16,
            mi_window: 64,
            mi_stride: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    /// Candidate source rotations in degrees.
    pub angles: Vec<f64>,
    /// Maximum image dimension, in pixels, of each search level.
    pub resolutions: Vec<usize>,
    /// Accepted deviation of either singular value from 1.
    pub scale_tolerance: f64,
    /// Deformable levels, coarse to fine.
    pub levels: Vec<LevelConfig>,
    pub seed: u64,
    pub selection: SelectionPolicy,
    pub max_keypoints: usize,
    pub match_ratio: f64,
    pub ransac_iterations: usize,
    pub inlier_threshold: f64,
    pub equalization_bins: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            angles: (0..12).map(|i| 30.0 * i as f64).collect(),
            resolutions: vec![100, 200, 300, 400, 500],
            scale_tolerance: 0.10,
            levels: vec![
                LevelConfig::with_scale(0.25),
                LevelConfig::with_scale(0.5),
                LevelConfig::with_scale(1.0),
            ],
            seed: 0,
            selection: SelectionPolicy::Inliers,
            max_keypoints: 1000,
            match_ratio: 0.9,
            ransac_iterations: 2000,
            inlier_threshold: 3.0,
            equalization_bins: 256,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.angles.is_empty() {
            return fail("angles must not be empty".into());
        }
        if let Some(a) = self.angles.iter().find(|a| !a.is_finite()) {
            return fail(format!("angle {a} is not finite"));
        }
        if self.resolutions.is_empty() {
            return fail("resolutions must not be empty".into());
        }
        if let Some(r) = self.resolutions.iter().find(|&&r| r < 32) {
            return fail(format!("resolution {r} is below the minimum of 32"));
        }
        if !(self.scale_tolerance > 0.0 && self.scale_tolerance < 1.0) {
            return fail(format!("scale_tolerance {} outside (0, 1)", self.scale_tolerance));
        }
        if self.max_keypoints == 0 {
            return fail("max_keypoints must be positive".into());
        }
        if !(self.match_ratio > 0.0 && self.match_ratio <= 1.0) {
            return fail(format!("match_ratio {} outside (0, 1]", self.match_ratio));
        }
        if self.ransac_iterations == 0 {
            return fail("ransac_iterations must be positive".into());
        }
        if self.inlier_threshold.is_nan() || self.inlier_threshold <= 0.0 {
            return fail(format!("inlier_threshold {} must be positive", self.inlier_threshold));
        }
        if self.equalization_bins < 2 {
            return fail("equalization_bins must be at least 2".into());
        }
        let mut previous_scale = 0.0;
        for (i, level) in self.levels.iter().enumerate() {
            if !(level.scale > 0.0 && level.scale <= 1.0) {
                return fail(format!("level {i}: scale {} outside (0, 1]", level.scale));
            }
            if level.scale < previous_scale {
                return fail(format!("level {i}: levels must be ordered coarse to fine"));
            }
            previous_scale = level.scale;
            if !(level.theta.is_finite() && level.theta >= 0.0) {
                return fail(format!("level {i}: theta {} must be a finite value >= 0", level.theta));
            }
            if !(level.step_size.is_finite() && level.step_size > 0.0) {
                return fail(format!("level {i}: step_size {} must be positive", level.step_size));
            }
            if level.mi_bins < 2 {
                return fail(format!("level {i}: mi_bins must be at least 2"));
            }
            if level.mi_window < 2 || level.mi_stride == 0 {
                return fail(format!("level {i}: mi_window must be >= 2 and mi_stride >= 1"));
            }
        }
        Ok(())
    }
}
