//! Multilevel deformable refinement of an affine initialization.
//!
//! At each level the field is `u = base + v`: `base` is the affine baked at
//! that level's resolution and `v` is the free residual. The loss is
//!
//! ```text
//! total = -similarity + theta * Reg(v)
//! similarity = ( MI(S ∘ u, T) + MI(S ∘ base, T ∘ (-v)) ) / 2
//! ```
//!
//! The second term pulls the target back by the residual. The two halves
//! have opposite gradients whenever `S ∘ u = T` pixel for pixel, so identical
//! inputs yield exactly zero gradient instead of a drift towards whatever
//! small misalignment the Parzen smoothing happens to favour.
//!
//! Steps follow Adam, with a proposal rejected (and the step halved) whenever
//! it would increase the loss.

mod mi;
mod regularization;
mod warp;

use serde::Serialize;

use crate::config::{LevelConfig, RegistrationConfig};
use crate::error::{Error, Result};
use crate::field::{bake_affine_to_field, upsample_field, DisplacementField};
use crate::geometry::AffineTransform2D;
use crate::image::RasterImage;
use crate::preprocess::resize;

pub use mi::{local_mutual_information, parzen_entropy};
pub use regularization::diffusive_regularization;
pub use warp::warp_image;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
const STEP_GROWTH: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    pub similarity: f64,
    pub regularity: f64,
    pub total: f64,
    pub level: usize,
    pub iteration: usize,
}

/// Everything that stays fixed while the residual of one level is optimized.
pub(crate) struct LevelProblem<'a> {
    pub src: &'a RasterImage,
    pub tgt: &'a RasterImage,
    pub base: Vec<[f64; 2]>,
    /// Source pulled through `base` alone.
    pub src_base: RasterImage,
    pub cfg: LevelConfig,
}

pub(crate) struct Evaluation {
    pub similarity: f64,
    pub regularity: f64,
    pub total: f64,
    pub grad: Vec<[f64; 2]>,
}

impl<'a> LevelProblem<'a> {
    pub fn new(src: &'a RasterImage, tgt: &'a RasterImage, base: Vec<[f64; 2]>, cfg: LevelConfig) -> Self {
        let zero = vec![[0.0; 2]; base.len()];
        let src_base = warp::warp_with_gradient(src, Some(&base), &zero, 1.0).image;
        let side = src.width().min(src.height());
        let cfg = LevelConfig {
            mi_window: cfg.mi_window.min(side),
            ..cfg
        };
        Self {
            src,
            tgt,
            base,
            src_base,
            cfg,
        }
    }

    pub fn evaluate(&self, v: &DisplacementField) -> Result<Evaluation> {
        let c = &self.cfg;
        let forward = warp::warp_with_gradient(self.src, Some(&self.base), v.vectors(), 1.0);
        let backward = warp::warp_with_gradient(self.tgt, None, v.vectors(), -1.0);
        let (mi_fwd, g_fwd) = local_mutual_information(&forward.image, self.tgt, c.mi_bins, c.mi_window, c.mi_stride)?;
        let (mi_bwd, g_bwd) =
            local_mutual_information(&backward.image, &self.src_base, c.mi_bins, c.mi_window, c.mi_stride)?;
        let (regularity, g_reg) = diffusive_regularization(v);
        let similarity = 0.5 * (mi_fwd + mi_bwd);
        let total = -similarity + c.theta * regularity;
        let grad = (0..v.vectors().len())
            .map(|i| {
                let [sx, sy] = forward.grad[i];
                let [tx, ty] = backward.grad[i];
                [
                    -0.5 * (g_fwd[i] * sx - g_bwd[i] * tx) + c.theta * g_reg[i][0],
                    -0.5 * (g_fwd[i] * sy - g_bwd[i] * ty) + c.theta * g_reg[i][1],
                ]
            })
            .collect();
        Ok(Evaluation {
            similarity,
            regularity,
            total,
            grad,
        })
    }
}

fn check_pair(src: &RasterImage, tgt: &RasterImage) -> Result<()> {
    src.require_channels(1)?;
    tgt.require_channels(1)?;
    if !src.same_dims(tgt) {
        return Err(Error::DimensionMismatch(format!(
            "source is {}x{} but target is {}x{}",
            src.width(),
            src.height(),
            tgt.width(),
            tgt.height()
        )));
    }
    Ok(())
}

/// Loss of one level at residual `v` on top of the fixed field `base`, with
/// its gradient with respect to `v`. This is the function minimized per level
/// by [`instance_optimize`].
pub fn level_objective(
    src: &RasterImage,
    tgt: &RasterImage,
    base: &DisplacementField,
    v: &DisplacementField,
    cfg: &LevelConfig,
) -> Result<(ObjectiveBreakdown, Vec<[f64; 2]>)> {
    check_pair(src, tgt)?;
    warp::check_dims(src, base)?;
    warp::check_dims(src, v)?;
    let e = LevelProblem::new(src, tgt, base.vectors().to_vec(), cfg.clone()).evaluate(v)?;
    let breakdown = ObjectiveBreakdown {
        similarity: e.similarity,
        regularity: e.regularity,
        total: e.total,
        level: 0,
        iteration: 0,
    };
    Ok((breakdown, e.grad))
}

/// Level-resolution version of a full-resolution pull transform.
fn level_transform(t: &AffineTransform2D, full: (usize, usize), level: (usize, usize)) -> AffineTransform2D {
    let sx = level.0 as f64 / full.0 as f64;
    let sy = level.1 as f64 / full.1 as f64;
    let to_full = AffineTransform2D::from_raw([1.0 / sx, 0.0, 0.5 / sx - 0.5, 0.0, 1.0 / sy, 0.5 / sy - 0.5]);
    let from_full = AffineTransform2D::from_raw([sx, 0.0, 0.5 * sx - 0.5, 0.0, sy, 0.5 * sy - 0.5]);
    from_full.compose(t).compose(&to_full)
}

fn level_dims(scale: f64, width: usize, height: usize) -> (usize, usize) {
    (
        ((width as f64 * scale).round() as usize).clamp(1, width),
        ((height as f64 * scale).round() as usize).clamp(1, height),
    )
}

/// Refines `init` into a dense pull field at the resolution of `src`/`tgt`.
/// Returns the field (affine included) and one trace entry per level for the
/// starting point plus one per iteration.
pub fn instance_optimize(
    src: &RasterImage,
    tgt: &RasterImage,
    init: &AffineTransform2D,
    cfg: &RegistrationConfig,
) -> Result<(DisplacementField, Vec<ObjectiveBreakdown>)> {
    check_pair(src, tgt)?;
    cfg.validate()?;
    let full = (src.width(), src.height());
    let mut trace = Vec::new();
    let mut residual: Option<DisplacementField> = None;
    for (index, level_cfg) in cfg.levels.iter().enumerate() {
        let (w, h) = level_dims(level_cfg.scale, full.0, full.1);
        let src_l = resize(src, w, h);
        let tgt_l = resize(tgt, w, h);
        let base = bake_affine_to_field(&level_transform(init, full, (w, h)), w, h);
        let v = match residual.take() {
            Some(prev) if prev.width() == w && prev.height() == h => prev,
            Some(prev) => upsample_field(&prev, w, h)?,
            None => DisplacementField::zeros(w, h),
        };
        let problem = LevelProblem::new(&src_l, &tgt_l, base.vectors().to_vec(), level_cfg.clone());
        residual = Some(optimize_level(&problem, v, index, &mut trace)?);
    }
    let residual = residual.expect("configuration has at least one level");
    let residual = if residual.width() == full.0 && residual.height() == full.1 {
        residual
    } else {
        upsample_field(&residual, full.0, full.1)?
    };
    let field = bake_affine_to_field(init, full.0, full.1).add(&residual)?;
    Ok((field, trace))
}

fn optimize_level(
    problem: &LevelProblem,
    mut v: DisplacementField,
    level: usize,
    trace: &mut Vec<ObjectiveBreakdown>,
) -> Result<DisplacementField> {
    let cfg = &problem.cfg;
    let evaluate = |v: &DisplacementField, iteration: usize| -> Result<Evaluation> {
        let e = problem.evaluate(v)?;
        let finite = e.total.is_finite() && e.grad.iter().all(|g| g[0].is_finite() && g[1].is_finite());
        if finite {
            Ok(e)
        } else {
            Err(Error::Diverged { level, iteration })
        }
    };
    let record = |e: &Evaluation, iteration: usize| ObjectiveBreakdown {
        similarity: e.similarity,
        regularity: e.regularity,
        total: e.total,
        level,
        iteration,
    };

    let mut current = evaluate(&v, 0)?;
    trace.push(record(&current, 0));
    let n = v.vectors().len();
    let mut m = vec![[0.0; 2]; n];
    let mut s = vec![[0.0; 2]; n];
    let mut t = 0;
    let mut fresh_gradient = true;
    let mut step = cfg.step_size;
    for iteration in 1..=cfg.iterations {
        if fresh_gradient {
            t += 1;
            for ((mi, si), g) in m.iter_mut().zip(s.iter_mut()).zip(&current.grad) {
                for c in 0..2 {
                    mi[c] = BETA1 * mi[c] + (1.0 - BETA1) * g[c];
                    si[c] = BETA2 * si[c] + (1.0 - BETA2) * g[c] * g[c];
                }
            }
        }
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        let mut proposal = v.clone();
        for ((p, mi), si) in proposal.vectors_mut().iter_mut().zip(&m).zip(&s) {
            for c in 0..2 {
                p[c] -= step * (mi[c] / bias1) / ((si[c] / bias2).sqrt() + EPSILON);
            }
        }
        let candidate = evaluate(&proposal, iteration)?;
        if candidate.total <= current.total {
            v = proposal;
            current = candidate;
            fresh_gradient = true;
            step = (step * STEP_GROWTH).min(cfg.step_size);
        } else {
            fresh_gradient = false;
            step *= 0.5;
        }
        trace.push(record(&current, iteration));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_image(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(0.1..0.5),
                    rng.gen_range(0.1..0.5),
                    rng.gen_range(0.0..6.0),
                )
            })
            .collect();
        RasterImage::from_fn(w, h, |x, y| {
            let s: f64 = waves
                .iter()
                .map(|(fx, fy, ph)| (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum();
            0.5 + 0.12 * s
        })
        .unwrap()
    }

    fn level_cfg(theta: f64) -> LevelConfig {
        LevelConfig {
            theta,
            mi_window: 8,
            mi_stride: 4,
            ..LevelConfig::with_scale(1.0)
        }
    }

    #[test]
    fn level_transform_of_identity_is_identity() {
        let t = level_transform(&AffineTransform2D::identity(), (1000, 800), (250, 200));
        assert!(t.max_abs_diff(&AffineTransform2D::identity()) < 1e-12);
        let shift = level_transform(&AffineTransform2D::translation(8.0, -4.0), (1000, 800), (250, 200));
        assert!(shift.max_abs_diff(&AffineTransform2D::translation(2.0, -1.0)) < 1e-12);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let (w, h) = (16, 16);
        let src = smooth_image(w, h, 1);
        let tgt = smooth_image(w, h, 2);
        let base = bake_affine_to_field(&AffineTransform2D::translation(0.3, -0.2), w, h);
        let problem = LevelProblem::new(&src, &tgt, base.vectors().to_vec(), level_cfg(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Fractional parts stay clear of pixel boundaries, where bilinear
        // sampling has one-sided derivatives.
        let values: Vec<[f64; 2]> = (0..w * h)
            .map(|_| [rng.gen_range(0.1..0.4), rng.gen_range(0.45..0.7)])
            .collect();
        let v = DisplacementField::new(w, h, values).unwrap();
        let analytic = problem.evaluate(&v).unwrap().grad;
        let step = 1e-6;
        let (mut diff, mut norm) = (0.0, 0.0);
        for (i, g) in analytic.iter().enumerate() {
            for (c, &gc) in g.iter().enumerate() {
                let mut plus = v.clone();
                plus.vectors_mut()[i][c] += step;
                let mut minus = v.clone();
                minus.vectors_mut()[i][c] -= step;
                let fd =
                    (problem.evaluate(&plus).unwrap().total - problem.evaluate(&minus).unwrap().total) / (2.0 * step);
                diff += (fd - gc).powi(2);
                norm += fd * fd;
            }
        }
        let rel = (diff / norm).sqrt();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn identical_inputs_do_not_drift() {
        let img = smooth_image(48, 48, 3);
        let cfg = RegistrationConfig {
            levels: vec![
                LevelConfig {
                    scale: 0.5,
                    iterations: 20,
                    ..level_cfg(0.1)
                },
                LevelConfig {
                    iterations: 20,
                    ..level_cfg(0.1)
                },
            ],
            ..Default::default()
        };
        let (field, trace) = instance_optimize(&img, &img, &AffineTransform2D::identity(), &cfg).unwrap();
        assert!(field.max_magnitude() < 0.5);
        for level in 0..2 {
            let entries: Vec<_> = trace.iter().filter(|e| e.level == level).collect();
            assert_eq!(entries.len(), 21);
            for e in &entries {
                assert!((e.similarity - entries[0].similarity).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn trace_totals_are_consistent() {
        let src = smooth_image(32, 32, 4);
        let tgt = smooth_image(32, 32, 5);
        let cfg = RegistrationConfig {
            levels: vec![LevelConfig {
                iterations: 10,
                ..level_cfg(0.3)
            }],
            ..Default::default()
        };
        let (_, trace) = instance_optimize(&src, &tgt, &AffineTransform2D::identity(), &cfg).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1].total <= pair[0].total);
        }
        for e in &trace {
            assert!(e.regularity >= 0.0);
            assert!((e.total - (-e.similarity + 0.3 * e.regularity)).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = smooth_image(16, 16, 1);
        let b = smooth_image(16, 17, 1);
        assert!(matches!(
            instance_optimize(&a, &b, &AffineTransform2D::identity(), &RegistrationConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
