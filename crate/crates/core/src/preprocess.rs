//! Modality preprocessing: brings the stained bright-field image and the
//! label-free SHG image to comparable geometric content before matching.
//!
//! H&E: hue → min-max normalization → global histogram equalization → 5×5 median.
//! SHG: the same chain without the hue extraction.

use crate::error::{Error, Result};
use crate::field::area_coordinate;
use crate::geometry::AffineTransform2D;
use crate::image::RasterImage;

pub const DEFAULT_EQUALIZATION_BINS: usize = 256;
const MEDIAN_RADIUS: usize = 2;

/// Hue channel of an RGB image as a fraction of a full turn. Gray pixels
/// (zero saturation) get hue 0.
pub fn rgb_to_hue(img: &RasterImage) -> Result<RasterImage> {
    img.require_channels(3)?;
    let data = img.data().chunks_exact(3).map(|px| hue(px[0], px[1], px[2])).collect();
    Ok(RasterImage::from_raw(img.width(), img.height(), 1, data))
}

fn hue(r: f64, g: f64, b: f64) -> f64 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta <= 0.0 {
        return 0.0;
    }
    let sextant = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = sextant / 6.0;
    // rem_euclid can land on exactly 6.0 for tiny negative inputs
    if h >= 1.0 {
        0.0
    } else {
        h
    }
}

/// Stretches the value range to `[0, 1]`; a constant image becomes all zeros.
pub fn normalize_minmax(img: &RasterImage) -> RasterImage {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let data = if range > 0.0 {
        img.data().iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; img.data().len()]
    };
    RasterImage::from_raw(img.width(), img.height(), img.channels(), data)
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Global histogram equalization: each pixel becomes the cumulative fraction
/// of pixels whose bin is at or below its own.
pub fn equalize_histogram(img: &RasterImage, bins: usize) -> Result<RasterImage> {
    img.require_channels(1)?;
    if bins < 2 {
        return Err(Error::Config(format!("equalization needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0usize; bins];
    for &v in img.data() {
        counts[bin_of(v, bins)] += 1;
    }
    let total = img.data().len() as f64;
    let mut cdf = Vec::with_capacity(bins);
    let mut running = 0usize;
    for c in counts {
        running += c;
        cdf.push(running as f64 / total);
    }
    let data = img.data().iter().map(|&v| cdf[bin_of(v, bins)]).collect();
    Ok(RasterImage::from_raw(img.width(), img.height(), 1, data))
}

/// 5×5 median filter with edge replication.
pub fn median_filter_5x5(img: &RasterImage) -> Result<RasterImage> {
    img.require_channels(1)?;
    img.require_min_size(2 * MEDIAN_RADIUS + 1)?;
    let (w, h) = (img.width(), img.height());
    let r = MEDIAN_RADIUS as i64;
    let mut window = Vec::with_capacity(25);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            window.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    window.push(img.at(xx, yy));
                }
            }
            let (_, median, _) = window.select_nth_unstable_by(12, f64::total_cmp);
            data.push(*median);
        }
    }
    Ok(RasterImage::from_raw(w, h, 1, data))
}

pub fn preprocess_he(img: &RasterImage) -> Result<RasterImage> {
    preprocess_he_with_bins(img, DEFAULT_EQUALIZATION_BINS)
}

pub fn preprocess_he_with_bins(img: &RasterImage, bins: usize) -> Result<RasterImage> {
    img.require_channels(3)?;
    img.require_min_size(5)?;
    let hue = rgb_to_hue(img)?;
    median_filter_5x5(&equalize_histogram(&normalize_minmax(&hue), bins)?)
}

pub fn preprocess_shg(img: &RasterImage) -> Result<RasterImage> {
    preprocess_shg_with_bins(img, DEFAULT_EQUALIZATION_BINS)
}

pub fn preprocess_shg_with_bins(img: &RasterImage, bins: usize) -> Result<RasterImage> {
    img.require_channels(1)?;
    img.require_min_size(5)?;
    median_filter_5x5(&equalize_histogram(&normalize_minmax(img), bins)?)
}

/// A resampled copy of an image together with its size ratios.
#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub image: RasterImage,
    /// Level width over original width.
    pub scale: f64,
    /// Level height over original height.
    pub scale_y: f64,
}

impl PyramidLevel {
    /// Maps original-resolution coordinates to level coordinates.
    pub fn from_original(&self) -> AffineTransform2D {
        let (sx, sy) = (self.scale, self.scale_y);
        AffineTransform2D::from_raw([sx, 0.0, 0.5 * sx - 0.5, 0.0, sy, 0.5 * sy - 0.5])
    }

    /// Maps level coordinates back to original-resolution coordinates.
    pub fn to_original(&self) -> AffineTransform2D {
        let (sx, sy) = (self.scale, self.scale_y);
        AffineTransform2D::from_raw([1.0 / sx, 0.0, 0.5 / sx - 0.5, 0.0, 1.0 / sy, 0.5 / sy - 0.5])
    }
}

/// Aspect-preserving resize so that the larger dimension equals `target`.
pub fn resize_to_max_dim(img: &RasterImage, target: usize) -> Result<PyramidLevel> {
    if target == 0 {
        return Err(Error::Config("resize target must be at least 1 pixel".into()));
    }
    let max_dim = img.width().max(img.height());
    let factor = target as f64 / max_dim as f64;
    let width = ((img.width() as f64 * factor).round() as usize).clamp(1, target);
    let height = ((img.height() as f64 * factor).round() as usize).clamp(1, target);
    let image = resize(img, width, height);
    Ok(PyramidLevel {
        scale: width as f64 / img.width() as f64,
        scale_y: height as f64 / img.height() as f64,
        image,
    })
}

/// Separable bilinear resampling. When shrinking, the triangle kernel is
/// widened by the reduction factor so every source pixel contributes.
pub fn resize(img: &RasterImage, width: usize, height: usize) -> RasterImage {
    if width == img.width() && height == img.height() {
        return img.clone();
    }
    let c = img.channels();
    let horizontal = filter_weights(img.width(), width);
    let vertical = filter_weights(img.height(), height);

    let mut tmp = vec![0.0; width * img.height() * c];
    for y in 0..img.height() {
        for (x, taps) in horizontal.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(sx, wgt) in taps {
                    acc += wgt * img.get(sx, y, ch);
                }
                tmp[(y * width + x) * c + ch] = acc;
            }
        }
    }
    let mut data = vec![0.0; width * height * c];
    for (y, taps) in vertical.iter().enumerate() {
        for x in 0..width {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(sy, wgt) in taps {
                    acc += wgt * tmp[(sy * width + x) * c + ch];
                }
                data[(y * width + x) * c + ch] = acc.clamp(0.0, 1.0);
            }
        }
    }
    RasterImage::from_raw(width, height, c, data)
}

fn filter_weights(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    let support = (from as f64 / to as f64).max(1.0);
    (0..to)
        .map(|i| {
            let center = area_coordinate(i as f64, from, to);
            let lo = (center - support).ceil() as i64;
            let hi = (center + support).floor() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for k in lo..=hi {
                let w = 1.0 - ((k as f64 - center) / support).abs();
                if w <= 0.0 {
                    continue;
                }
                let idx = k.clamp(0, from as i64 - 1) as usize;
                total += w;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(tap) => tap.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for tap in &mut taps {
                tap.1 /= total;
            }
            taps
        })
        .collect()
}
