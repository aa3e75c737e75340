//! Seeded synthetic H&E/SHG pairs with exact ground truth.
//!
//! A structure map of nuclei-like blobs and curved fibers is colored into an
//! RGB "H&E" image whose hue rises with structure density. The "SHG"
//! counterpart is the smoothed gradient magnitude of that image's luminance,
//! zeroed below a percentile to mimic missing signal, then resampled through
//! the ground-truth pull mapping
//!
//! ```text
//! phi(p) = A(p) + d(p),   A = rotation_about(angle, center) ∘ translation(tx, ty)
//! d(p)   = amplitude * (sin(2πy/L + φx), sin(2πx/L + φy)),   L = size / 2
//! ```
//!
//! so `shg(p) = structure(phi(p))` and landmarks satisfy `source = phi(target)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::DisplacementField;
use crate::geometry::{AffineTransform2D, Point};
use crate::image::{Border, RasterImage};
use crate::landmarks::LandmarkSet;

const SPARSITY_PERCENTILE: f64 = 0.6;
const LANDMARK_GRID: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub size: usize,
    pub rotation: f64,
    pub translation: (f64, f64),
    pub deform_amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    /// Three-channel source.
    pub he: RasterImage,
    /// Single-channel target.
    pub shg: RasterImage,
    /// Affine part of the ground-truth pull mapping (target → source).
    pub affine: AffineTransform2D,
    /// Complete ground-truth pull field, affine included.
    pub field: DisplacementField,
    pub landmarks_target: LandmarkSet,
    pub landmarks_source: LandmarkSet,
}

pub fn make_synthetic_pair(spec: &SyntheticSpec) -> SyntheticPair {
    assert!(spec.size >= 64, "synthetic pairs need size >= 64");
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let structure = structure_map(n, &mut rng);
    let he = colorize(&structure, &mut rng);
    let shg_source = structure_channel(&he, &mut rng);

    let center = Point::new((n - 1) as f64 / 2.0, (n - 1) as f64 / 2.0);
    let affine = AffineTransform2D::rotation_about(spec.rotation, center)
        .compose(&AffineTransform2D::translation(spec.translation.0, spec.translation.1));
    let wavelength = n as f64 / 2.0;
    let phase_x = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase_y = rng.gen_range(0.0..std::f64::consts::TAU);
    let amp = spec.deform_amplitude;
    let tau = std::f64::consts::TAU;
    let phi = |p: Point| {
        let a = affine.apply(p);
        Point::new(
            a.x + amp * (tau * p.y / wavelength + phase_x).sin(),
            a.y + amp * (tau * p.x / wavelength + phase_y).sin(),
        )
    };
    let field = DisplacementField::from_fn(n, n, |x, y| {
        let p = Point::new(x as f64, y as f64);
        let q = phi(p);
        [q.x - p.x, q.y - p.y]
    });
    let shg = shg_source.resample(n, n, Border::Zero, |x, y| {
        let q = phi(Point::new(x, y));
        (q.x, q.y)
    });

    let target: Vec<Point> = (0..LANDMARK_GRID)
        .flat_map(|j| (0..LANDMARK_GRID).map(move |i| (i, j)))
        .map(|(i, j)| {
            let step = (n - 1) as f64 * 0.6 / (LANDMARK_GRID - 1) as f64;
            Point::new(
                (n - 1) as f64 * 0.2 + i as f64 * step,
                (n - 1) as f64 * 0.2 + j as f64 * step,
            )
        })
        .collect();
    let source: Vec<Point> = target.iter().map(|&p| phi(p)).collect();

    SyntheticPair {
        he,
        shg,
        affine,
        field,
        landmarks_target: LandmarkSet::from_points(target),
        landmarks_source: LandmarkSet::from_points(source),
    }
}

/// Blob and fiber density in [0, 1].
fn structure_map(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut map = vec![0.0f64; n * n];
    let area_units = (n * n) as f64 / (64.0 * 64.0);

    let blobs = (12.0 * area_units).round() as usize;
    for _ in 0..blobs {
        let cx = rng.gen_range(0.0..n as f64);
        let cy = rng.gen_range(0.0..n as f64);
        let radius = rng.gen_range(1.5..4.5);
        let strength = rng.gen_range(0.6..1.0);
        splat(&mut map, n, cx, cy, radius, strength);
    }

    let fibers = (3.0 * area_units).round() as usize;
    for _ in 0..fibers {
        let mut x = rng.gen_range(0.0..n as f64);
        let mut y = rng.gen_range(0.0..n as f64);
        let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let curvature = rng.gen_range(-0.03..0.03);
        let length = rng.gen_range(0.15..0.45) * n as f64;
        let width = rng.gen_range(0.9..1.6);
        let strength = rng.gen_range(0.5..0.9);
        let mut travelled = 0.0;
        while travelled < length {
            splat(&mut map, n, x, y, width, strength);
            heading += curvature + rng.gen_range(-0.05..0.05);
            x += heading.cos();
            y += heading.sin();
            travelled += 1.0;
        }
    }
    map
}

/// Max-combines a Gaussian bump into the map.
fn splat(map: &mut [f64], n: usize, cx: f64, cy: f64, sigma: f64, strength: f64) {
    let reach = (3.0 * sigma).ceil() as i64;
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    for y in (y0 - reach).max(0)..=(y0 + reach).min(n as i64 - 1) {
        for x in (x0 - reach).max(0)..=(x0 + reach).min(n as i64 - 1) {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let v = strength * (-d2 / (2.0 * sigma * sigma)).exp();
            let slot = &mut map[y as usize * n + x as usize];
            *slot = slot.max(v);
        }
    }
}

/// Violet background shading to pink where structure is dense, darker and
/// more saturated with density.
fn colorize(structure: &[f64], rng: &mut ChaCha8Rng) -> RasterImage {
    let n = (structure.len() as f64).sqrt() as usize;
    let mut data = Vec::with_capacity(n * n * 3);
    for &f in structure {
        let hue = 0.78 + 0.17 * f + rng.gen_range(-0.01..0.01);
        let sat = (0.35 + 0.45 * f).clamp(0.0, 1.0);
        let val = (0.92 - 0.45 * f + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
        let [r, g, b] = hsv_to_rgb(hue, sat, val);
        data.extend_from_slice(&[r, g, b]);
    }
    RasterImage::from_clamped(n, n, 3, data).expect("valid dims")
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Smoothed gradient magnitude of luminance, sparsified and sprinkled with
/// impulse noise.
fn structure_channel(he: &RasterImage, rng: &mut ChaCha8Rng) -> RasterImage {
    let (w, h) = (he.width(), he.height());
    let lum: Vec<f64> = he
        .data()
        .chunks_exact(3)
        .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
        .collect();
    let at = |x: i64, y: i64| lum[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            mag[y as usize * w + x as usize] = gx.hypot(gy);
        }
    }
    let mag = gaussian_blur(&mag, w, h, 1.2);
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[((sorted.len() - 1) as f64 * SPARSITY_PERCENTILE) as usize];
    let max = sorted[sorted.len() - 1].max(1e-12);
    let mut data: Vec<f64> = mag
        .iter()
        .map(|&m| {
            if m <= cut {
                0.0
            } else {
                ((m - cut) / (max - cut)).sqrt()
            }
        })
        .collect();
    for v in data.iter_mut() {
        if rng.gen_bool(0.003) {
            *v = rng.gen_range(0.0..1.0);
        }
    }
    RasterImage::from_clamped(w, h, 1, data).expect("valid dims")
}

fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = (x + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * data[y * w + xx];
            }
            tmp[y * w + x as usize] = acc / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = (y + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y as usize * w + x] = acc / norm;
        }
    }
    out
}
