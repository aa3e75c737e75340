//! Scale-space keypoint detector with orientation-normalized gradient
//! histogram descriptors (difference-of-Gaussians extrema, 4×4×8 = 128-bin
//! descriptors).

use std::f32::consts::PI;

use crate::geometry::Point;
use crate::image::RasterImage;

use super::Keypoint;

const OCTAVE_LAYERS: usize = 3;
const BASE_SIGMA: f32 = 1.6;
const ASSUMED_BLUR: f32 = 0.5;
const CONTRAST_THRESHOLD: f32 = 0.04;
const EDGE_RATIO: f32 = 10.0;
const IMAGE_BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;

const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f32 = 0.8;

const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE_FACTOR: f32 = 3.0;
const DESC_MAG_THRESHOLD: f32 = 0.2;
pub const DESCRIPTOR_LEN: usize = DESC_WIDTH * DESC_WIDTH * DESC_BINS;

#[derive(Clone)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    fn downsample(&self) -> Plane {
        let width = self.width.div_ceil(2);
        let height = self.height.div_ceil(2);
        let mut out = Plane::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                out.data[y * width + x] = self.at(2 * x, 2 * y);
            }
        }
        out
    }

    fn blur(&self, sigma: f32) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil().max(1.0) as i64;
        let kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f32 = kernel.iter().sum();
        let kernel: Vec<f32> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.width as i64, self.height as i64);

        let mut tmp = Plane::zeros(self.width, self.height);
        for y in 0..h {
            let row = &self.data[(y * w) as usize..((y + 1) * w) as usize];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let xx = (x + k as i64 - radius).clamp(0, w - 1) as usize;
                    acc += kv * row[xx];
                }
                tmp.data[(y * w + x) as usize] = acc;
            }
        }
        let mut out = Plane::zeros(self.width, self.height);
        for y in 0..h {
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y + k as i64 - radius).clamp(0, h - 1) as usize;
                let src = &tmp.data[yy * self.width..(yy + 1) * self.width];
                let dst = &mut out.data[(y * w) as usize..((y + 1) * w) as usize];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
        out
    }
}

struct Octave {
    gaussians: Vec<Plane>,
    dogs: Vec<Plane>,
}

fn build_pyramid(base: Plane) -> Vec<Octave> {
    let min_dim = base.width.min(base.height) as f32;
    let count = ((min_dim.log2().floor() as i64) - 2).max(1) as usize;
    let k = 2f32.powf(1.0 / OCTAVE_LAYERS as f32);
    // Incremental blur taking layer i-1 to layer i.
    let increments: Vec<f32> = (1..OCTAVE_LAYERS + 3)
        .map(|i| {
            let prev = BASE_SIGMA * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt()
        })
        .collect();

    let mut octaves = Vec::with_capacity(count);
    let mut first = base;
    for o in 0..count {
        if first.width < 2 * IMAGE_BORDER + 3 || first.height < 2 * IMAGE_BORDER + 3 {
            break;
        }
        let mut gaussians = Vec::with_capacity(OCTAVE_LAYERS + 3);
        gaussians.push(first);
        for &inc in &increments {
            let next = gaussians.last().expect("non-empty").blur(inc);
            gaussians.push(next);
        }
        let dogs = gaussians
            .windows(2)
            .map(|pair| Plane {
                width: pair[0].width,
                height: pair[0].height,
                data: pair[1].data.iter().zip(&pair[0].data).map(|(b, a)| b - a).collect(),
            })
            .collect();
        first = gaussians[OCTAVE_LAYERS].downsample();
        octaves.push(Octave { gaussians, dogs });
        if o + 1 == count {
            break;
        }
    }
    octaves
}

struct Extremum {
    octave: usize,
    layer: usize,
    x: f32,
    y: f32,
    /// Interpolated layer offset in [-0.5, 0.5].
    layer_offset: f32,
    contrast: f32,
}

fn is_extremum(dogs: &[Plane], layer: usize, x: usize, y: usize, value: f32) -> bool {
    for plane in &dogs[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            let row = &plane.data[yy * plane.width + x - 1..yy * plane.width + x + 2];
            for &v in row {
                if value > 0.0 && v > value {
                    return false;
                }
                if value < 0.0 && v < value {
                    return false;
                }
            }
        }
    }
    true
}

/// Quadratic refinement of a discrete extremum; `None` when it is rejected.
fn refine(dogs: &[Plane], octave: usize, layer: usize, x: usize, y: usize) -> Option<Extremum> {
    let (mut l, mut xi, mut yi) = (layer as i64, x as i64, y as i64);
    let width = dogs[0].width as i64;
    let height = dogs[0].height as i64;
    let border = IMAGE_BORDER as i64;
    for _ in 0..MAX_INTERP_STEPS {
        let (lu, xu, yu) = (l as usize, xi as usize, yi as usize);
        let d = |dl: i64, dx: i64, dy: i64| {
            dogs[(lu as i64 + dl) as usize].at((xu as i64 + dx) as usize, (yu as i64 + dy) as usize)
        };
        let v = d(0, 0, 0);
        let g = [
            0.5 * (d(0, 1, 0) - d(0, -1, 0)),
            0.5 * (d(0, 0, 1) - d(0, 0, -1)),
            0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
        ];
        let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * v;
        let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * v;
        let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * v;
        let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
        let dxs = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
        let dys = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
        let hessian = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(hessian, [-g[0], -g[1], -g[2]])?;

        if offset.iter().all(|o| o.abs() < 0.5) {
            let contrast = v + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
            if contrast.abs() * (OCTAVE_LAYERS as f32) < CONTRAST_THRESHOLD {
                return None;
            }
            let trace = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            if det <= 0.0 || trace * trace * EDGE_RATIO >= (EDGE_RATIO + 1.0).powi(2) * det {
                return None;
            }
            return Some(Extremum {
                octave,
                layer: lu,
                x: xi as f32 + offset[0],
                y: yi as f32 + offset[1],
                layer_offset: offset[2],
                contrast: contrast.abs(),
            });
        }
        if offset.iter().any(|o| o.abs() > 1e6) {
            return None;
        }
        xi += offset[0].round() as i64;
        yi += offset[1].round() as i64;
        l += offset[2].round() as i64;
        if l < 1
            || l > OCTAVE_LAYERS as i64
            || xi < border
            || yi < border
            || xi >= width - border
            || yi >= height - border
        {
            return None;
        }
    }
    None
}

fn solve3(a: [[f32; 3]; 3], b: [f32; 3]) -> Option<[f32; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-12 || !det.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        let d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *slot = d / det;
    }
    Some(out)
}

#[inline]
fn gradient(plane: &Plane, x: usize, y: usize) -> (f32, f32) {
    let dx = plane.at(x + 1, y) - plane.at(x - 1, y);
    let dy = plane.at(x, y + 1) - plane.at(x, y - 1);
    (dx, dy)
}

/// Dominant gradient orientations around a point, in radians.
fn orientations(plane: &Plane, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as i64;
    let weight_scale = -1.0 / (2.0 * (ORI_SIGMA_FACTOR * sigma).powi(2));
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let yy = cy + dy;
        if yy <= 0 || yy >= plane.height as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = cx + dx;
            if xx <= 0 || xx >= plane.width as i64 - 1 {
                continue;
            }
            let (gx, gy) = gradient(plane, xx as usize, yy as usize);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let w = ((dx * dx + dy * dy) as f32 * weight_scale).exp();
            let bin = ((angle / (2.0 * PI) * ORI_BINS as f32).round() as usize) % ORI_BINS;
            hist[bin] += w * mag;
        }
    }
    let mut smooth = [0f32; ORI_BINS];
    for (i, s) in smooth.iter_mut().enumerate() {
        let at = |o: i64| hist[(i as i64 + o).rem_euclid(ORI_BINS as i64) as usize];
        *s = (at(-2) + at(2)) / 16.0 + 4.0 * (at(-1) + at(1)) / 16.0 + 6.0 * at(0) / 16.0;
    }
    let max = smooth.iter().copied().fold(0.0, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let left = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let right = smooth[(i + 1) % ORI_BINS];
        let v = smooth[i];
        if v > left && v > right && v >= ORI_PEAK_RATIO * max {
            let shift = 0.5 * (left - right) / (left - 2.0 * v + right);
            let bin = (i as f32 + shift).rem_euclid(ORI_BINS as f32);
            out.push(bin / ORI_BINS as f32 * 2.0 * PI);
        }
    }
    out
}

fn descriptor(plane: &Plane, x: f32, y: f32, sigma: f32, angle: f32) -> Vec<f32> {
    let (sin, cos) = angle.sin_cos();
    let bin_width = DESC_SCALE_FACTOR * sigma;
    let radius = (bin_width * std::f32::consts::SQRT_2 * (DESC_WIDTH as f32 + 1.0) * 0.5).round() as i64;
    let radius = radius.min(((plane.width * plane.width + plane.height * plane.height) as f32).sqrt() as i64);
    let half = DESC_WIDTH as f32 / 2.0;
    let weight_scale = -1.0 / (2.0 * half * half);
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let mut hist = vec![0f32; DESCRIPTOR_LEN];

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            // Sample offset rotated into the keypoint frame, in bin units.
            let rx = (cos * dx as f32 + sin * dy as f32) / bin_width;
            let ry = (-sin * dx as f32 + cos * dy as f32) / bin_width;
            let rbin = ry + half - 0.5;
            let cbin = rx + half - 0.5;
            if rbin <= -1.0 || rbin >= DESC_WIDTH as f32 || cbin <= -1.0 || cbin >= DESC_WIDTH as f32 {
                continue;
            }
            let (xx, yy) = (cx + dx, cy + dy);
            if xx <= 0 || yy <= 0 || xx >= plane.width as i64 - 1 || yy >= plane.height as i64 - 1 {
                continue;
            }
            let (gx, gy) = gradient(plane, xx as usize, yy as usize);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let theta = (gy.atan2(gx) - angle).rem_euclid(2.0 * PI);
            let obin = theta / (2.0 * PI) * DESC_BINS as f32;
            let w = ((rx * rx + ry * ry) * weight_scale).exp() * mag;
            add_trilinear(&mut hist, rbin, cbin, obin, w);
        }
    }

    normalize(&mut hist);
    for v in &mut hist {
        *v = v.min(DESC_MAG_THRESHOLD);
    }
    normalize(&mut hist);
    hist
}

fn add_trilinear(hist: &mut [f32], rbin: f32, cbin: f32, obin: f32, w: f32) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (dr, dc, dori) = (rbin - r0, cbin - c0, obin - o0);
    let (r0, c0, o0) = (r0 as i64, c0 as i64, o0 as i64);
    for (ri, wr) in [(r0, 1.0 - dr), (r0 + 1, dr)] {
        if ri < 0 || ri >= DESC_WIDTH as i64 {
            continue;
        }
        for (ci, wc) in [(c0, 1.0 - dc), (c0 + 1, dc)] {
            if ci < 0 || ci >= DESC_WIDTH as i64 {
                continue;
            }
            for (oi, wo) in [(o0, 1.0 - dori), (o0 + 1, dori)] {
                let ob = oi.rem_euclid(DESC_BINS as i64) as usize;
                let idx = (ri as usize * DESC_WIDTH + ci as usize) * DESC_BINS + ob;
                hist[idx] += w * wr * wc * wo;
            }
        }
    }
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Detects up to `max_count` keypoints, strongest first.
pub fn detect_keypoints(img: &RasterImage, max_count: usize) -> Vec<Keypoint> {
    let lum = if img.channels() == 1 {
        img.clone()
    } else {
        img.channel(0)
    };
    let base = Plane {
        width: lum.width(),
        height: lum.height(),
        data: lum.data().iter().map(|&v| v as f32).collect(),
    };
    if max_count == 0 || base.width < 2 * IMAGE_BORDER + 3 || base.height < 2 * IMAGE_BORDER + 3 {
        return Vec::new();
    }
    let base = base.blur((BASE_SIGMA * BASE_SIGMA - ASSUMED_BLUR * ASSUMED_BLUR).sqrt());
    let pyramid = build_pyramid(base);
    let prelim = 0.5 * CONTRAST_THRESHOLD / OCTAVE_LAYERS as f32;

    let mut keypoints = Vec::new();
    for (o, octave) in pyramid.iter().enumerate() {
        let (w, h) = (octave.dogs[0].width, octave.dogs[0].height);
        for layer in 1..=OCTAVE_LAYERS {
            let plane = &octave.dogs[layer];
            for y in IMAGE_BORDER..h - IMAGE_BORDER {
                for x in IMAGE_BORDER..w - IMAGE_BORDER {
                    let v = plane.at(x, y);
                    if v.abs() <= prelim || !is_extremum(&octave.dogs, layer, x, y, v) {
                        continue;
                    }
                    let Some(ext) = refine(&octave.dogs, o, layer, x, y) else {
                        continue;
                    };
                    push_oriented(&pyramid, &ext, &mut keypoints, img.width(), img.height());
                }
            }
        }
    }
    keypoints.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.position.y.total_cmp(&b.position.y))
            .then(a.position.x.total_cmp(&b.position.x))
            .then(a.orientation.total_cmp(&b.orientation))
    });
    keypoints.truncate(max_count);
    keypoints
}

fn push_oriented(pyramid: &[Octave], ext: &Extremum, out: &mut Vec<Keypoint>, width: usize, height: usize) {
    let octave_sigma = BASE_SIGMA * 2f32.powf((ext.layer as f32 + ext.layer_offset) / OCTAVE_LAYERS as f32);
    let plane = &pyramid[ext.octave].gaussians[ext.layer];
    let factor = (1usize << ext.octave) as f64;
    let position = Point::new(ext.x as f64 * factor, ext.y as f64 * factor);
    if position.x < 0.0 || position.y < 0.0 || position.x > (width - 1) as f64 || position.y > (height - 1) as f64 {
        return;
    }
    for angle in orientations(plane, ext.x, ext.y, octave_sigma) {
        out.push(Keypoint {
            position,
            response: ext.contrast as f64,
            scale: octave_sigma as f64 * factor,
            orientation: angle as f64,
            descriptor: descriptor(plane, ext.x, ext.y, octave_sigma, angle),
        });
    }
}
