//! Landmark error, folding diagnostics and matcher ablation reports.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::config::RegistrationConfig;
use crate::error::{Error, Result};
use crate::features::Matcher;
use crate::field::DisplacementField;
use crate::geometry::AffineTransform2D;
use crate::image::RasterImage;
use crate::landmarks::{Landmark, LandmarkSet};
use crate::search::exhaustive_align;

/// A target-to-source mapping that landmarks can be pushed through.
#[derive(Debug, Clone, Copy)]
pub enum Mapping<'a> {
    Affine(&'a AffineTransform2D),
    Field(&'a DisplacementField),
}

/// Maps target-frame landmarks into the source frame. Under a field, points
/// outside the field's domain keep their position and are flagged.
pub fn transform_landmarks(landmarks: &LandmarkSet, mapping: Mapping) -> LandmarkSet {
    let points = landmarks
        .points
        .iter()
        .map(|l| match mapping {
            _ if l.out_of_bounds => *l,
            Mapping::Affine(t) => Landmark {
                position: t.apply(l.position),
                out_of_bounds: false,
            },
            Mapping::Field(u) if u.contains(l.position) => Landmark {
                position: u.map_point(l.position),
                out_of_bounds: false,
            },
            Mapping::Field(_) => Landmark {
                position: l.position,
                out_of_bounds: true,
            },
        })
        .collect();
    LandmarkSet { points }
}

/// Target registration error in pixels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreReport {
    /// Distances of the pairs that were used, in input order.
    pub per_point: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
    /// Pairs skipped because either side was flagged out of bounds.
    pub excluded: usize,
    pub unit: &'static str,
}

pub fn compute_tre(a: &LandmarkSet, b: &LandmarkSet) -> Result<TreReport> {
    if a.len() != b.len() {
        return Err(Error::LandmarkCountMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyLandmarks);
    }
    let per_point: Vec<f64> = a
        .points
        .iter()
        .zip(&b.points)
        .filter(|(p, q)| !p.out_of_bounds && !q.out_of_bounds)
        .map(|(p, q)| p.position.distance(q.position))
        .collect();
    if per_point.is_empty() {
        return Err(Error::EmptyLandmarks);
    }
    let count = per_point.len();
    let mean = per_point.iter().sum::<f64>() / count as f64;
    let mut sorted = per_point.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if count % 2 == 1 {
        sorted[count / 2]
    } else {
        0.5 * (sorted[count / 2 - 1] + sorted[count / 2])
    };
    Ok(TreReport {
        max: sorted[count - 1],
        per_point,
        mean,
        median,
        count,
        excluded: a.len() - count,
        unit: "px",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldingReport {
    pub min_det: f64,
    pub fold_count: usize,
}

/// Jacobian determinant of `p + u(p)` at every pixel. Central differences
/// inside, one-sided at the borders; a pixel folds when its determinant is
/// not positive.
pub fn jacobian_folding_report(u: &DisplacementField) -> FoldingReport {
    let (w, h) = (u.width(), u.height());
    let derivative = |i: usize, n: usize, at: &dyn Fn(usize) -> [f64; 2]| -> [f64; 2] {
        if n < 2 {
            return [0.0, 0.0];
        }
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let (a, b) = (at(lo), at(hi));
        let span = (hi - lo) as f64;
        [(b[0] - a[0]) / span, (b[1] - a[1]) / span]
    };
    let mut min_det = f64::INFINITY;
    let mut fold_count = 0;
    for y in 0..h {
        for x in 0..w {
            let ddx = derivative(x, w, &|k| u.at(k, y));
            let ddy = derivative(y, h, &|k| u.at(x, k));
            let det = (1.0 + ddx[0]) * (1.0 + ddy[1]) - ddy[0] * ddx[1];
            min_det = min_det.min(det);
            if det <= 0.0 {
                fold_count += 1;
            }
        }
    }
    FoldingReport { min_det, fold_count }
}

/// True when registration lowered the mean error below `threshold` times
/// the unregistered error.
pub fn classify_success(before: &TreReport, after: &TreReport, threshold: f64) -> bool {
    after.mean < threshold * before.mean
}

/// One image pair for an ablation sweep. Landmarks are `(source, target)`.
#[derive(Debug, Clone)]
pub struct AblationPair {
    pub he: RasterImage,
    pub shg: RasterImage,
    pub landmarks: Option<(LandmarkSet, LandmarkSet)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub matcher_name: String,
    pub success_count: usize,
    pub total: usize,
    /// Percent.
    pub success_rate: f64,
}

/// Runs the initial alignment for every matcher on every pair. A pair that
/// errors counts as a failure.
pub fn run_ablation(pairs: &[AblationPair], matchers: &[&dyn Matcher], cfg: &RegistrationConfig) -> Vec<AblationRow> {
    matchers
        .iter()
        .map(|matcher| {
            let success_count = pairs
                .iter()
                .filter(|pair| pair_succeeds(pair, *matcher, cfg).unwrap_or(false))
                .count();
            AblationRow {
                matcher_name: matcher.name().to_string(),
                success_count,
                total: pairs.len(),
                success_rate: if pairs.is_empty() {
                    0.0
                } else {
                    100.0 * success_count as f64 / pairs.len() as f64
                },
            }
        })
        .collect()
}

fn pair_succeeds(pair: &AblationPair, matcher: &dyn Matcher, cfg: &RegistrationConfig) -> Result<bool> {
    let outcome = exhaustive_align(&pair.he, &pair.shg, cfg, matcher)?;
    match &pair.landmarks {
        Some((source, target)) => {
            let before = compute_tre(target, source)?;
            let mapped = transform_landmarks(target, Mapping::Affine(&outcome.transform));
            let after = compute_tre(&mapped, source)?;
            Ok(classify_success(&before, &after, 1.0))
        }
        None => Ok(!outcome.no_accepted_candidate),
    }
}

/// Plain-text table with aligned columns.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let name_width = rows
        .iter()
        .map(|r| r.matcher_name.len())
        .max()
        .unwrap_or(0)
        .max("matcher".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>7}  {:>5}  {:>8}",
        "matcher", "success", "total", "rate (%)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>7}  {:>5}  {:>8.2}",
            r.matcher_name, r.success_count, r.total, r.success_rate
        );
    }
    out
}

/// CSV with header `matcher,success,total,rate`; rate is a percentage.
pub fn write_ablation_csv(rows: &[AblationRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::file("ablation csv", e);
    writer
        .write_record(["matcher", "success", "total", "rate"])
        .map_err(io)?;
    for r in rows {
        writer
            .write_record([
                r.matcher_name.clone(),
                r.success_count.to_string(),
                r.total.to_string(),
                format!("{:.2}", r.success_rate),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::file("ablation csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::bake_affine_to_field;
    use crate::geometry::Point;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::from_points(points.iter().map(|&(x, y)| Point::new(x, y)))
    }

    #[test]
    fn identity_and_constant_mappings() {
        let s = set(&[(1.0, 2.0), (3.5, 4.25)]);
        assert_eq!(
            transform_landmarks(&s, Mapping::Affine(&AffineTransform2D::identity())),
            s
        );
        let u = DisplacementField::constant(10, 10, [3.0, 4.0]);
        let moved = transform_landmarks(&s, Mapping::Field(&u));
        assert_eq!(moved, set(&[(4.0, 6.0), (6.5, 8.25)]));
    }

    #[test]
    fn out_of_domain_points_are_flagged_and_excluded() {
        let u = DisplacementField::zeros(5, 5);
        let s = set(&[(1.0, 1.0), (7.0, 1.0), (2.0, 2.0)]);
        let moved = transform_landmarks(&s, Mapping::Field(&u));
        assert_eq!(moved.flagged_count(), 1);
        let report = compute_tre(&moved, &s).unwrap();
        assert_eq!((report.count, report.excluded), (2, 1));
    }

    #[test]
    fn affine_and_baked_field_agree() {
        let t = AffineTransform2D::rotation_about(23.0, Point::new(20.0, 15.0))
            .compose(&AffineTransform2D::translation(2.5, -1.0));
        let u = bake_affine_to_field(&t, 40, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s =
            LandmarkSet::from_points((0..50).map(|_| Point::new(rng.gen_range(0.0..39.0), rng.gen_range(0.0..29.0))));
        let a = transform_landmarks(&s, Mapping::Affine(&t));
        let b = transform_landmarks(&s, Mapping::Field(&u));
        for (p, q) in a.positions().zip(b.positions()) {
            assert!(p.distance(q) < 1e-6);
        }
    }

    #[test]
    fn tre_examples() {
        let s = set(&[(1.0, 1.0), (2.0, 5.0)]);
        let r = compute_tre(&s, &s).unwrap();
        assert_eq!((r.mean, r.max, r.count), (0.0, 0.0, 2));
        let r = compute_tre(&set(&[(0.0, 0.0)]), &set(&[(3.0, 4.0)])).unwrap();
        assert_eq!((r.mean, r.median, r.max), (5.0, 5.0, 5.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = || {
            (0..10)
                .map(|_| (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
                .collect::<Vec<_>>()
        };
        let (a, b) = (pts(), pts());
        let oracle: f64 = a
            .iter()
            .zip(&b)
            .map(|(p, q): (&(f64, f64), &(f64, f64))| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
            .sum::<f64>()
            / 10.0;
        assert!((compute_tre(&set(&a), &set(&b)).unwrap().mean - oracle).abs() < 1e-12);
    }

    #[test]
    fn tre_errors() {
        assert!(matches!(
            compute_tre(&set(&[(0.0, 0.0)]), &set(&[])),
            Err(Error::LandmarkCountMismatch(1, 0))
        ));
        assert!(matches!(compute_tre(&set(&[]), &set(&[])), Err(Error::EmptyLandmarks)));
    }

    #[test]
    fn folding_examples() {
        let r = jacobian_folding_report(&DisplacementField::zeros(6, 4));
        assert_eq!((r.min_det, r.fold_count), (1.0, 0));
        let expand = DisplacementField::from_fn(6, 4, |x, y| [x as f64, y as f64]);
        let r = jacobian_folding_report(&expand);
        assert_eq!((r.min_det, r.fold_count), (4.0, 0));
        // Reflection x -> 2c - x: u = 2(c - x), d/dx (x + u) = -1 everywhere.
        let reflect = DisplacementField::from_fn(8, 3, |x, _| [2.0 * (3.5 - x as f64), 0.0]);
        assert_eq!(jacobian_folding_report(&reflect).fold_count, 24);
    }

    #[test]
    fn success_rule() {
        let report = |mean: f64| TreReport {
            per_point: vec![mean],
            mean,
            median: mean,
            max: mean,
            count: 1,
            excluded: 0,
            unit: "px",
        };
        assert!(classify_success(&report(50.0), &report(5.0), 1.0));
        assert!(!classify_success(&report(5.0), &report(50.0), 1.0));
        assert!(!classify_success(&report(5.0), &report(5.0), 1.0));
    }

    #[test]
    fn table_and_csv_shapes() {
        let rows = vec![
            AblationRow {
                matcher_name: "builtin".into(),
                success_count: 2,
                total: 3,
                success_rate: 200.0 / 3.0,
            },
            AblationRow {
                matcher_name: "external-long-name".into(),
                success_count: 0,
                total: 3,
                success_rate: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_ablation_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "matcher,success,total,rate\nbuiltin,2,3,66.67\nexternal-long-name,0,3,0.00\n"
        );
        let table = format_ablation_table(&rows);
        let widths: Vec<usize> = table.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }

    proptest! {
        #[test]
        fn tre_is_symmetric(points in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..20)) {
            let a = set(&points.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
            let b = set(&points.iter().map(|p| (p.2, p.3)).collect::<Vec<_>>());
            prop_assert_eq!(compute_tre(&a, &b).unwrap(), compute_tre(&b, &a).unwrap());
        }

        #[test]
        fn success_is_scale_invariant(before in 0.01f64..100.0, after in 0.01f64..100.0, k in 0.01f64..100.0) {
            let r = |m: f64| TreReport { per_point: vec![m], mean: m, median: m, max: m, count: 1, excluded: 0, unit: "px" };
            prop_assert_eq!(
                classify_success(&r(before), &r(after), 1.0),
                classify_success(&r(before * k), &r(after * k), 1.0)
            );
        }

        #[test]
        fn baked_affines_never_fold(angle in -180.0f64..180.0, sx in 0.5f64..2.0, sy in 0.5f64..2.0, shear in -0.5f64..0.5) {
            let t = AffineTransform2D::rotation(angle)
                .compose(&AffineTransform2D::new([sx, shear, 1.0, 0.0, sy, -2.0]).unwrap());
            prop_assume!(t.determinant() > 0.0);
            prop_assert_eq!(jacobian_folding_report(&bake_affine_to_field(&t, 7, 5)).fold_count, 0);
        }
    }
}
