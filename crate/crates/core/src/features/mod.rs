//! Keypoints, descriptor matching, robust affine fitting, and the matcher
//! plugin boundary.

mod detect;
mod external;
mod matching;
mod ransac;

use std::collections::HashSet;

pub use detect::{detect_keypoints, DESCRIPTOR_LEN};
pub use external::{run_external_matcher, ExternalMatcher};
pub use matching::match_descriptors;
pub use ransac::{estimate_affine_ransac, fit_affine_least_squares, RansacParams};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::image::RasterImage;

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub position: Point,
    /// Detector contrast, non-negative.
    pub response: f64,
    /// Gaussian scale in pixels of the detection image.
    pub scale: f64,
    /// Radians.
    pub orientation: f64,
    /// Unit-norm, or empty for keypoints supplied already matched.
    pub descriptor: Vec<f32>,
}

impl Keypoint {
    /// A bare location without descriptor, as produced by external matchers.
    pub fn at(position: Point) -> Self {
        Self {
            position,
            response: 0.0,
            scale: 0.0,
            orientation: 0.0,
            descriptor: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub confidence: f64,
}

/// One-to-one correspondences between two keypoint lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub keypoints_a: Vec<Keypoint>,
    pub keypoints_b: Vec<Keypoint>,
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Matched `(a, b)` positions in pair order.
    pub fn point_pairs(&self) -> Vec<(Point, Point)> {
        self.pairs
            .iter()
            .map(|m| {
                (
                    self.keypoints_a[m.index_a].position,
                    self.keypoints_b[m.index_b].position,
                )
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen_a = HashSet::new();
        let mut seen_b = HashSet::new();
        for m in &self.pairs {
            if m.index_a >= self.keypoints_a.len() || m.index_b >= self.keypoints_b.len() {
                return Err(Error::Matcher(format!(
                    "match ({}, {}) out of range",
                    m.index_a, m.index_b
                )));
            }
            if !(0.0..=1.0).contains(&m.confidence) {
                return Err(Error::Matcher(format!("confidence {} outside [0, 1]", m.confidence)));
            }
            if !seen_a.insert(m.index_a) {
                return Err(Error::NonInjective(format!("index_a {} matched twice", m.index_a)));
            }
            if !seen_b.insert(m.index_b) {
                return Err(Error::NonInjective(format!("index_b {} matched twice", m.index_b)));
            }
        }
        Ok(())
    }
}

/// Produces correspondences between a source image (`a`) and a target image (`b`).
pub trait Matcher: Send + Sync {
    fn name(&self) -> &str;
    fn match_images(&self, a: &RasterImage, b: &RasterImage) -> Result<MatchSet>;
}

/// Built-in backend: difference-of-Gaussians keypoints, gradient-histogram
/// descriptors, mutual nearest neighbours with a ratio test.
#[derive(Debug, Clone)]
pub struct BuiltinMatcher {
    pub max_keypoints: usize,
    pub ratio: f64,
}

impl BuiltinMatcher {
    pub fn from_config(cfg: &crate::config::RegistrationConfig) -> Self {
        Self {
            max_keypoints: cfg.max_keypoints,
            ratio: cfg.match_ratio,
        }
    }
}

impl Default for BuiltinMatcher {
    fn default() -> Self {
        Self::from_config(&crate::config::RegistrationConfig::default())
    }
}

impl Matcher for BuiltinMatcher {
    fn name(&self) -> &str {
        "builtin"
    }

    fn match_images(&self, a: &RasterImage, b: &RasterImage) -> Result<MatchSet> {
        let ka = detect_keypoints(a, self.max_keypoints);
        let kb = detect_keypoints(b, self.max_keypoints);
        Ok(match_descriptors(ka, kb, self.ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_duplicates_and_ranges() {
        let kps = |n: usize| {
            (0..n)
                .map(|i| Keypoint::at(Point::new(i as f64, 0.0)))
                .collect::<Vec<_>>()
        };
        let mut set = MatchSet {
            keypoints_a: kps(3),
            keypoints_b: kps(3),
            pairs: vec![
                MatchPair {
                    index_a: 0,
                    index_b: 1,
                    confidence: 0.5,
                },
                MatchPair {
                    index_a: 1,
                    index_b: 2,
                    confidence: 1.0,
                },
            ],
        };
        set.validate().unwrap();
        set.pairs.push(MatchPair {
            index_a: 0,
            index_b: 0,
            confidence: 0.1,
        });
        assert!(matches!(set.validate(), Err(Error::NonInjective(_))));
        set.pairs.pop();
        set.pairs.push(MatchPair {
            index_a: 2,
            index_b: 2,
            confidence: 0.1,
        });
        assert!(matches!(set.validate(), Err(Error::NonInjective(_))));
        set.pairs.pop();
        set.pairs.push(MatchPair {
            index_a: 7,
            index_b: 0,
            confidence: 0.1,
        });
        assert!(set.validate().is_err());
        set.pairs.pop();
        set.pairs.push(MatchPair {
            index_a: 2,
            index_b: 0,
            confidence: 1.5,
        });
        assert!(set.validate().is_err());
    }
}
