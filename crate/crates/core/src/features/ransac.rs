use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{AffineTransform2D, Point};

use super::MatchSet;

const MIN_SAMPLE: usize = 3;
const CONFIDENCE: f64 = 0.9999;
const REFIT_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct RansacParams {
    /// Maximum residual, in target-frame pixels, for an inlier.
    pub inlier_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_threshold: 3.0,
            iterations: 2000,
            seed: 0,
        }
    }
}

/// Robust affine fit over minimal 3-point samples followed by a least-squares
/// refit on the consensus set.
///
/// Returns the pull transform taking `b` (target) positions to `a` (source)
/// positions and the final inlier count.
pub fn estimate_affine_ransac(m: &MatchSet, params: &RansacParams) -> Result<(AffineTransform2D, usize)> {
    let pairs = m.point_pairs();
    if pairs.len() < MIN_SAMPLE {
        return Err(Error::InsufficientCorrespondences {
            needed: MIN_SAMPLE,
            got: pairs.len(),
        });
    }
    // Residuals live in the target frame, so fit the forward map a -> b and invert at the end.
    let threshold_sq = params.inlier_threshold * params.inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(AffineTransform2D, usize)> = None;
    let mut needed = params.iterations;
    let mut iter = 0;
    while iter < needed.min(params.iterations) {
        iter += 1;
        let idx = sample(&mut rng, pairs.len(), MIN_SAMPLE);
        let sample_pairs: Vec<(Point, Point)> = idx.iter().map(|i| pairs[i]).collect();
        let Some(model) = exact_affine(&sample_pairs) else {
            continue;
        };
        let count = count_inliers(&model, &pairs, threshold_sq);
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((model, count));
            let frac = count as f64 / pairs.len() as f64;
            let p_good = frac.powi(MIN_SAMPLE as i32);
            needed = if p_good >= 1.0 {
                iter
            } else if p_good <= 0.0 {
                params.iterations
            } else {
                ((1.0 - CONFIDENCE).ln() / (1.0 - p_good).ln()).ceil() as usize
            };
        }
    }
    let (mut model, mut count) = best.ok_or(Error::DegenerateSamples)?;

    for _ in 0..REFIT_ROUNDS {
        let inliers: Vec<(Point, Point)> = pairs
            .iter()
            .copied()
            .filter(|(a, b)| residual_sq(&model, *a, *b) <= threshold_sq)
            .collect();
        let Ok(refit) = fit_affine_least_squares(&inliers) else {
            break;
        };
        let refit_count = count_inliers(&refit, &pairs, threshold_sq);
        if refit_count < count {
            break;
        }
        let unchanged = refit_count == count && refit.max_abs_diff(&model) < 1e-12;
        model = refit;
        count = refit_count;
        if unchanged {
            break;
        }
    }
    Ok((model.inverse()?, count))
}

#[inline]
fn residual_sq(forward: &AffineTransform2D, a: Point, b: Point) -> f64 {
    let p = forward.apply(a);
    (p.x - b.x).powi(2) + (p.y - b.y).powi(2)
}

fn count_inliers(forward: &AffineTransform2D, pairs: &[(Point, Point)], threshold_sq: f64) -> usize {
    pairs
        .iter()
        .filter(|(a, b)| residual_sq(forward, *a, *b) <= threshold_sq)
        .count()
}

/// Affine through three correspondences, `None` for (near-)collinear samples.
fn exact_affine(pairs: &[(Point, Point)]) -> Option<AffineTransform2D> {
    let (p0, p1, p2) = (pairs[0].0, pairs[1].0, pairs[2].0);
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let cross = e1.x * e2.y - e1.y * e2.x;
    let scale = e1.norm().max(e2.norm()).max(1e-12);
    if cross.abs() < 1e-6 * scale * scale {
        return None;
    }
    let t = fit_affine_least_squares(pairs).ok()?;
    (t.determinant().abs() > 1e-9).then_some(t)
}

/// Least-squares affine mapping the first point of each pair onto the second.
pub fn fit_affine_least_squares(pairs: &[(Point, Point)]) -> Result<AffineTransform2D> {
    if pairs.len() < MIN_SAMPLE {
        return Err(Error::InsufficientCorrespondences {
            needed: MIN_SAMPLE,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in pairs {
        sx += s.x;
        sy += s.y;
        dx += d.x;
        dy += d.y;
    }
    let (csx, csy, cdx, cdy) = (sx / n, sy / n, dx / n, dy / n);
    // Normal equations on centred coordinates: [sxx sxy; sxy syy] * row = rhs.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut xu, mut yu, mut xv, mut yv) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in pairs {
        let (x, y) = (s.x - csx, s.y - csy);
        let (u, v) = (d.x - cdx, d.y - cdy);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        xu += x * u;
        yu += y * u;
        xv += x * v;
        yv += y * v;
    }
    let det = sxx * syy - sxy * sxy;
    let spread = sxx + syy;
    if det.abs() <= 1e-12 * spread * spread || spread == 0.0 {
        return Err(Error::DegenerateTransform("correspondences are collinear".into()));
    }
    let a11 = (xu * syy - yu * sxy) / det;
    let a12 = (yu * sxx - xu * sxy) / det;
    let a21 = (xv * syy - yv * sxy) / det;
    let a22 = (yv * sxx - xv * sxy) / det;
    let t1 = cdx - a11 * csx - a12 * csy;
    let t2 = cdy - a21 * csx - a22 * csy;
    AffineTransform2D::new([a11, a12, t1, a21, a22, t2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Keypoint, MatchPair};
    use rand::Rng;

    fn match_set(points_a: &[Point], points_b: &[Point]) -> MatchSet {
        MatchSet {
            keypoints_a: points_a.iter().map(|&p| Keypoint::at(p)).collect(),
            keypoints_b: points_b.iter().map(|&p| Keypoint::at(p)).collect(),
            pairs: (0..points_a.len())
                .map(|i| MatchPair {
                    index_a: i,
                    index_b: i,
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    fn known_affine() -> AffineTransform2D {
        AffineTransform2D::new([0.93, -0.31, 12.5, 0.27, 1.04, -7.25]).unwrap()
    }

    /// Target points on a seeded grid-ish layout; sources from the pull map.
    fn correspondences(n: usize, seed: u64) -> (Vec<Point>, Vec<Point>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = known_affine();
        let b: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)))
            .collect();
        let a = b.iter().map(|&p| t.apply(p)).collect();
        (a, b)
    }

    #[test]
    fn exact_correspondences_recover_model() {
        let (a, b) = correspondences(10, 1);
        let (t, inliers) = estimate_affine_ransac(&match_set(&a, &b), &RansacParams::default()).unwrap();
        assert_eq!(inliers, 10);
        assert!(t.max_abs_diff(&known_affine()) < 1e-6);
    }

    #[test]
    fn outliers_are_rejected() {
        let (mut a, mut b) = correspondences(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            a.push(Point::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)));
            b.push(Point::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)));
        }
        let params = RansacParams {
            seed: 7,
            ..Default::default()
        };
        let (t, inliers) = estimate_affine_ransac(&match_set(&a, &b), &params).unwrap();
        assert_eq!(inliers, 10);
        assert!(t.max_abs_diff(&known_affine()) < 1e-3);
    }

    #[test]
    fn too_few_matches() {
        let (a, b) = correspondences(2, 3);
        assert!(matches!(
            estimate_affine_ransac(&match_set(&a, &b), &RansacParams::default()),
            Err(Error::InsufficientCorrespondences { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn collinear_matches_are_degenerate() {
        let b: Vec<Point> = (0..8).map(|i| Point::new(i as f64, 2.0 * i as f64)).collect();
        let a = b.clone();
        assert!(matches!(
            estimate_affine_ransac(&match_set(&a, &b), &RansacParams::default()),
            Err(Error::DegenerateSamples)
        ));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let (mut a, mut b) = correspondences(20, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            a.push(Point::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)));
            b.push(Point::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)));
        }
        let m = match_set(&a, &b);
        let params = RansacParams {
            seed: 42,
            ..Default::default()
        };
        let first = estimate_affine_ransac(&m, &params).unwrap();
        let second = estimate_affine_ransac(&m, &params).unwrap();
        assert_eq!(first.0.matrix(), second.0.matrix());
        assert_eq!(first.1, second.1);
    }

    #[test]
    fn recovery_rate_with_forty_percent_outliers() {
        // 12 inliers, 8 outliers (40%), 100 seeded trials.
        let t = known_affine();
        let mut successes = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut a = vec![];
            let mut b = vec![];
            for _ in 0..12 {
                let p = Point::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
                b.push(p);
                a.push(t.apply(p));
            }
            for _ in 0..8 {
                b.push(Point::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)));
                a.push(Point::new(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)));
            }
            let params = RansacParams {
                seed: trial,
                ..Default::default()
            };
            let (est, _) = estimate_affine_ransac(&match_set(&a, &b), &params).unwrap();
            let forward = est.inverse().unwrap();
            let covers_truth = (0..12).all(|i| forward.apply(a[i]).distance(b[i]) <= 3.0);
            if covers_truth {
                successes += 1;
            }
        }
        assert!(successes >= 99, "{successes}/100");
    }
}
