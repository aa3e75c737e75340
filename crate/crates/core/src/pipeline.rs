//! End-to-end registration of one H&E/SHG pair.

use std::time::Instant;

use serde::Serialize;

use crate::deformable::{instance_optimize, warp_image, ObjectiveBreakdown};
use crate::error::Result;
use crate::eval::{jacobian_folding_report, FoldingReport};
use crate::features::Matcher;
use crate::field::{bake_affine_to_field, DisplacementField};
use crate::geometry::{AffineTransform2D, Point};
use crate::image::{Border, RasterImage};
use crate::io::{Direction, PipelineConfig};
use crate::preprocess::{preprocess_he_with_bins, preprocess_shg_with_bins, resize, resize_to_max_dim};
use crate::search::{align_preprocessed, CandidateResult};

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub iterations: usize,
    pub first: ObjectiveBreakdown,
    pub last: ObjectiveBreakdown,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub preprocess_secs: f64,
    pub initial_alignment_secs: f64,
    pub deformable_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub direction: Direction,
    pub source_size: [usize; 2],
    pub target_size: [usize; 2],
    /// Pull transform from target to source pixels.
    pub transform: AffineTransform2D,
    pub selected: Option<CandidateResult>,
    pub no_accepted_candidate: bool,
    pub candidates: Vec<CandidateResult>,
    pub deformable_enabled: bool,
    pub working_size: Option<[usize; 2]>,
    pub objective: Vec<LevelSummary>,
    pub folding: FoldingReport,
    pub timings: Timings,
}

pub struct Registration {
    pub transform: AffineTransform2D,
    /// Full-resolution pull field over the target grid, affine included.
    pub field: DisplacementField,
    pub source_preprocessed: RasterImage,
    pub target_preprocessed: RasterImage,
    pub trace: Vec<ObjectiveBreakdown>,
    pub report: RunReport,
}

/// Registers `source` onto `target`. With [`Direction::HeToShg`] the source
/// is the three-channel H&E image; with [`Direction::ShgToHe`] it is the SHG
/// image and the target is H&E.
pub fn register_pair(
    source: &RasterImage,
    target: &RasterImage,
    cfg: &PipelineConfig,
    matcher: &dyn Matcher,
    initial_only: bool,
) -> Result<Registration> {
    cfg.validate()?;
    let reg = &cfg.registration;
    let started = Instant::now();
    let (he, shg) = match cfg.direction {
        Direction::HeToShg => (source, target),
        Direction::ShgToHe => (target, source),
    };
    let he_pre = preprocess_he_with_bins(he, reg.equalization_bins)?;
    let shg_pre = preprocess_shg_with_bins(shg, reg.equalization_bins)?;
    let preprocess_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let search = align_preprocessed(&he_pre, &shg_pre, reg, matcher)?;
    let initial_alignment_secs = started.elapsed().as_secs_f64();
    let (src_pre, tgt_pre, transform) = match cfg.direction {
        Direction::HeToShg => (he_pre, shg_pre, search.transform),
        Direction::ShgToHe => (shg_pre, he_pre, search.transform.inverse()?),
    };

    let started = Instant::now();
    let deformable = cfg.deformable_enabled && !initial_only;
    let (field, trace, working_size) = if deformable {
        let (field, trace, size) = refine(&src_pre, &tgt_pre, &transform, cfg)?;
        (field, trace, Some(size))
    } else {
        (
            bake_affine_to_field(&transform, tgt_pre.width(), tgt_pre.height()),
            Vec::new(),
            None,
        )
    };
    let deformable_secs = started.elapsed().as_secs_f64();

    let report = RunReport {
        direction: cfg.direction,
        source_size: [source.width(), source.height()],
        target_size: [target.width(), target.height()],
        transform,
        selected: search.selected.map(|i| search.candidates[i].clone()),
        no_accepted_candidate: search.no_accepted_candidate,
        candidates: search.candidates,
        deformable_enabled: deformable,
        working_size,
        objective: summarize(&trace),
        folding: jacobian_folding_report(&field),
        timings: Timings {
            preprocess_secs,
            initial_alignment_secs,
            deformable_secs,
        },
    };
    Ok(Registration {
        transform,
        field,
        source_preprocessed: src_pre,
        target_preprocessed: tgt_pre,
        trace,
        report,
    })
}

/// Runs the deformable stage on working-resolution copies and lifts the
/// result back onto the full target grid.
fn refine(
    src: &RasterImage,
    tgt: &RasterImage,
    transform: &AffineTransform2D,
    cfg: &PipelineConfig,
) -> Result<(DisplacementField, Vec<ObjectiveBreakdown>, [usize; 2])> {
    let max_dim = tgt.width().max(tgt.height());
    let tgt_level = resize_to_max_dim(tgt, cfg.deformable_resolution.min(max_dim))?;
    let (w, h) = (tgt_level.image.width(), tgt_level.image.height());
    // Both images share the working grid; the source's own scale is folded
    // into the initial transform.
    let src_work = resize(src, w, h);
    let src_sx = w as f64 / src.width() as f64;
    let src_sy = h as f64 / src.height() as f64;
    let src_from_full = AffineTransform2D::from_raw([src_sx, 0.0, 0.5 * src_sx - 0.5, 0.0, src_sy, 0.5 * src_sy - 0.5]);
    let init = src_from_full.compose(transform).compose(&tgt_level.to_original());

    let (work_field, trace) = instance_optimize(&src_work, &tgt_level.image, &init, &cfg.registration)?;
    let baked = bake_affine_to_field(&init, w, h);
    let residual = DisplacementField::from_fn(w, h, |x, y| {
        let (a, b) = (work_field.at(x, y), baked.at(x, y));
        [a[0] - b[0], a[1] - b[1]]
    });

    let to_work = tgt_level.from_original();
    let field = DisplacementField::from_fn(tgt.width(), tgt.height(), |x, y| {
        let p = Point::new(x as f64, y as f64);
        let q = to_work.apply(p);
        let [rx, ry] = residual.sample(q.x, q.y);
        let s = transform.apply(p);
        [s.x - p.x + rx / src_sx, s.y - p.y + ry / src_sy]
    });
    Ok((field, trace, [w, h]))
}

fn summarize(trace: &[ObjectiveBreakdown]) -> Vec<LevelSummary> {
    let mut out: Vec<LevelSummary> = Vec::new();
    for entry in trace {
        match out.last_mut() {
            Some(s) if s.level == entry.level => {
                s.last = *entry;
                s.iterations = entry.iteration;
            }
            _ => out.push(LevelSummary {
                level: entry.level,
                iterations: entry.iteration,
                first: *entry,
                last: *entry,
            }),
        }
    }
    out
}

/// RGB overlay on the target grid: warped source in red, target in green.
pub fn overlay(source: &RasterImage, target: &RasterImage, field: &DisplacementField) -> Result<RasterImage> {
    let warped = warp_into(source, field)?;
    let data = warped
        .data()
        .iter()
        .zip(target.data())
        .flat_map(|(&r, &g)| [r, g, 0.0])
        .collect();
    RasterImage::new(target.width(), target.height(), 3, data)
}

/// Pulls `img` through a field defined on another grid (the target's).
/// Samples outside `img` clamp to its edge.
pub fn warp_into(img: &RasterImage, field: &DisplacementField) -> Result<RasterImage> {
    if img.width() == field.width() && img.height() == field.height() {
        return warp_image(img, field);
    }
    let mut data = Vec::with_capacity(field.vectors().len() * img.channels());
    for (i, [dx, dy]) in field.vectors().iter().enumerate() {
        let (x, y) = ((i % field.width()) as f64 + dx, (i / field.width()) as f64 + dy);
        for c in 0..img.channels() {
            data.push(img.sample(x, y, c, Border::Clamp));
        }
    }
    RasterImage::new(field.width(), field.height(), img.channels(), data)
}
