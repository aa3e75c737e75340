//! Exhaustive initial alignment: every (rotation, resolution) candidate is
//! matched and fitted, candidates that change scale by more than the
//! tolerance are rejected, and the accepted candidate with the most
//! supporting keypoints wins.

use serde::Serialize;

use crate::config::{RegistrationConfig, SelectionPolicy};
use crate::error::Result;
use crate::features::{estimate_affine_ransac, Matcher, RansacParams};
use crate::geometry::{AffineTransform2D, Point};
use crate::image::{Border, RasterImage};
use crate::preprocess::{preprocess_he_with_bins, preprocess_shg_with_bins, resize_to_max_dim, PyramidLevel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub angle: f64,
    pub resolution: usize,
    /// Pull transform in full-resolution pixel coordinates, candidate rotation included.
    pub transform: AffineTransform2D,
    pub match_count: usize,
    pub inlier_count: usize,
    pub accepted: bool,
    pub rejection_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub transform: AffineTransform2D,
    /// Index into `candidates` of the selected candidate.
    pub selected: Option<usize>,
    /// Set when every candidate was rejected and the identity was returned.
    pub no_accepted_candidate: bool,
    pub candidates: Vec<CandidateResult>,
}

/// Rotates an image about its center into a canvas of the same size. Reads
/// outside the original image are zero. The returned transform maps
/// rotated-frame coordinates back to original-frame coordinates.
pub fn rotate_image(img: &RasterImage, angle: f64) -> (RasterImage, AffineTransform2D) {
    let center = Point::new((img.width() - 1) as f64 / 2.0, (img.height() - 1) as f64 / 2.0);
    let back = AffineTransform2D::rotation_about(-angle, center);
    let rotated = img.resample(img.width(), img.height(), Border::Zero, |x, y| {
        let p = back.apply(Point::new(x, y));
        (p.x, p.y)
    });
    (rotated, back)
}

/// Evaluates one candidate on already preprocessed full-resolution images.
pub fn evaluate_candidate(
    src: &RasterImage,
    tgt: &RasterImage,
    angle: f64,
    resolution: usize,
    matcher: &dyn Matcher,
    cfg: &RegistrationConfig,
) -> Result<CandidateResult> {
    let src_level = resize_to_max_dim(src, resolution)?;
    let tgt_level = resize_to_max_dim(tgt, resolution)?;
    Ok(evaluate_on_levels(
        &src_level, &tgt_level, angle, resolution, matcher, cfg,
    ))
}

fn candidate_seed(base: u64, angle: f64, resolution: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ angle.to_bits().rotate_left(17)
        ^ (resolution as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn evaluate_on_levels(
    src_level: &PyramidLevel,
    tgt_level: &PyramidLevel,
    angle: f64,
    resolution: usize,
    matcher: &dyn Matcher,
    cfg: &RegistrationConfig,
) -> CandidateResult {
    let mut result = CandidateResult {
        angle,
        resolution,
        transform: AffineTransform2D::identity(),
        match_count: 0,
        inlier_count: 0,
        accepted: false,
        rejection_reason: None,
    };
    let (rotated, rotated_to_level) = rotate_image(&src_level.image, angle);
    let matches = match matcher.match_images(&rotated, &tgt_level.image) {
        Ok(m) => m,
        Err(e) => {
            result.rejection_reason = Some(format!("matcher failed: {e}"));
            return result;
        }
    };
    let params = RansacParams {
        inlier_threshold: cfg.inlier_threshold,
        iterations: cfg.ransac_iterations,
        seed: candidate_seed(cfg.seed, angle, resolution),
    };
    let (level_transform, inliers) = match estimate_affine_ransac(&matches, &params) {
        Ok(r) => r,
        Err(e) => {
            result.rejection_reason = Some(format!("ransac failed: {e}"));
            return result;
        }
    };
    result.match_count = matches.len();
    result.inlier_count = inliers;
    // target full -> target level -> rotated source level -> source level -> source full
    let full = src_level
        .to_original()
        .compose(&rotated_to_level)
        .compose(&level_transform)
        .compose(&tgt_level.from_original());
    result.transform = full;
    match full.scale_factors() {
        Ok((lo, hi)) => {
            // Pull and push singular values, so a 1.3x enlargement reads as 30%.
            let change = [lo, hi, 1.0 / lo, 1.0 / hi]
                .iter()
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max);
            if change > cfg.scale_tolerance {
                result.rejection_reason = Some(format!(
                    "scale change {:.0}% exceeds {:.0}%",
                    change * 100.0,
                    cfg.scale_tolerance * 100.0
                ));
            } else {
                result.accepted = true;
            }
        }
        Err(e) => result.rejection_reason = Some(e.to_string()),
    }
    result
}

/// Angle folded into (-180, 180].
fn signed_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Picks the best accepted candidate. Ties go to the smaller absolute
/// rotation, then the larger resolution, then the smaller angle.
pub fn select_candidate(candidates: &[CandidateResult], policy: SelectionPolicy) -> Option<usize> {
    let score = |c: &CandidateResult| match policy {
        SelectionPolicy::Inliers => c.inlier_count,
        SelectionPolicy::Matches => c.match_count,
    };
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.accepted)
        .min_by(|(_, a), (_, b)| {
            score(b)
                .cmp(&score(a))
                .then(signed_angle(a.angle).abs().total_cmp(&signed_angle(b.angle).abs()))
                .then(b.resolution.cmp(&a.resolution))
                .then(a.angle.rem_euclid(360.0).total_cmp(&b.angle.rem_euclid(360.0)))
        })
        .map(|(i, _)| i)
}

/// Runs the full candidate grid on already preprocessed images.
pub fn align_preprocessed(
    src: &RasterImage,
    tgt: &RasterImage,
    cfg: &RegistrationConfig,
    matcher: &dyn Matcher,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut levels = Vec::with_capacity(cfg.resolutions.len());
    for &r in &cfg.resolutions {
        levels.push((r, resize_to_max_dim(src, r)?, resize_to_max_dim(tgt, r)?));
    }
    let mut candidates = Vec::with_capacity(cfg.angles.len() * levels.len());
    for &angle in &cfg.angles {
        for (resolution, src_level, tgt_level) in &levels {
            candidates.push(evaluate_on_levels(
                src_level,
                tgt_level,
                angle,
                *resolution,
                matcher,
                cfg,
            ));
        }
    }
    let selected = select_candidate(&candidates, cfg.selection);
    let transform = selected.map_or(AffineTransform2D::identity(), |i| candidates[i].transform);
    Ok(SearchOutcome {
        transform,
        selected,
        no_accepted_candidate: selected.is_none(),
        candidates,
    })
}

/// Preprocesses an H&E source and an SHG target, then runs the candidate grid.
pub fn exhaustive_align(
    src_he: &RasterImage,
    tgt_shg: &RasterImage,
    cfg: &RegistrationConfig,
    matcher: &dyn Matcher,
) -> Result<SearchOutcome> {
    let src = preprocess_he_with_bins(src_he, cfg.equalization_bins)?;
    let tgt = preprocess_shg_with_bins(tgt_shg, cfg.equalization_bins)?;
    align_preprocessed(&src, &tgt, cfg, matcher)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n: usize) -> RasterImage {
        RasterImage::from_fn(n, n, |x, y| (y * n + x) as f64 / (n * n) as f64).unwrap()
    }

    #[test]
    fn rotate_zero_and_full_turn() {
        let img = labeled(8);
        let (same, t) = rotate_image(&img, 0.0);
        assert_eq!(same, img);
        assert_eq!(t, AffineTransform2D::identity());

        let (turned, t) = rotate_image(&img, 360.0);
        for (a, b) in turned.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(t.max_abs_diff(&AffineTransform2D::identity()) < 1e-9);
    }

    #[test]
    fn rotate_quarter_turn_permutes_pixels() {
        let n = 8;
        let img = labeled(n);
        let (rot, back) = rotate_image(&img, 90.0);
        for y in 0..n {
            for x in 0..n {
                let (rx, ry) = (n - 1 - y, x);
                assert!((rot.at(rx, ry) - img.at(x, y)).abs() < 1e-12, "({x},{y})");
                let p = back.apply(Point::new(rx as f64, ry as f64));
                assert!((p.x - x as f64).abs() < 1e-12 && (p.y - y as f64).abs() < 1e-12);
            }
        }
    }

    fn candidate(angle: f64, resolution: usize, inliers: usize, matches: usize, accepted: bool) -> CandidateResult {
        CandidateResult {
            angle,
            resolution,
            transform: AffineTransform2D::translation(angle, resolution as f64),
            match_count: matches,
            inlier_count: inliers,
            accepted,
            rejection_reason: None,
        }
    }

    #[test]
    fn selection_rules() {
        let cands = vec![
            candidate(0.0, 100, 10, 20, true),
            candidate(30.0, 200, 50, 60, false),
            candidate(330.0, 300, 12, 15, true),
            candidate(30.0, 300, 12, 40, true),
            candidate(30.0, 400, 12, 12, true),
        ];
        // 30 and 330 both fold to |30|; larger resolution wins, then smaller angle.
        assert_eq!(select_candidate(&cands, SelectionPolicy::Inliers), Some(4));
        assert_eq!(select_candidate(&cands, SelectionPolicy::Matches), Some(3));
        assert_eq!(
            select_candidate(&[candidate(0.0, 100, 5, 5, false)], SelectionPolicy::Inliers),
            None
        );
    }

    #[test]
    fn selection_ignores_order_and_count_scaling() {
        let cands = vec![
            candidate(60.0, 100, 7, 9, true),
            candidate(0.0, 500, 7, 8, true),
            candidate(90.0, 300, 3, 30, true),
            candidate(0.0, 200, 7, 11, true),
        ];
        let chosen = &cands[select_candidate(&cands, SelectionPolicy::Inliers).unwrap()];
        let mut reversed = cands.clone();
        reversed.reverse();
        assert_eq!(
            &reversed[select_candidate(&reversed, SelectionPolicy::Inliers).unwrap()],
            chosen
        );
        let scaled: Vec<_> = cands
            .iter()
            .map(|c| CandidateResult {
                inlier_count: c.inlier_count * 3,
                ..c.clone()
            })
            .collect();
        assert_eq!(
            select_candidate(&scaled, SelectionPolicy::Inliers),
            select_candidate(&cands, SelectionPolicy::Inliers)
        );
        assert_eq!((chosen.angle, chosen.resolution), (0.0, 500));
    }
}
