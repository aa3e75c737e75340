//! Normalized raster images.
//!
//! Pixel coordinates put the origin at the center of the top-left pixel,
//! with x pointing right and y pointing down. Pixel `(i, j)` is therefore
//! sampled exactly at the real coordinate `(i, j)`.

use crate::error::{Error, Result};

/// Row-major image with 1 or 3 interleaved channels, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// What a sampler reads for coordinates outside the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Clamp to the nearest edge pixel.
    Clamp,
    /// Read zero.
    Zero,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a per-pixel function; output is clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_clamped(width, height, 1, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Value of a single-channel pixel.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn require_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(Error::ChannelMismatch {
                expected,
                actual: self.channels,
            });
        }
        Ok(())
    }

    pub(crate) fn require_min_size(&self, min: usize) -> Result<()> {
        if self.width < min || self.height < min {
            return Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min,
            });
        }
        Ok(())
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> RasterImage {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear sample of channel `c` at real coordinates `(x, y)`.
    pub fn sample(&self, x: f64, y: f64, c: usize, border: Border) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = self.fetch(x0, y0, c, border);
        let p10 = self.fetch(x0 + 1, y0, c, border);
        let p01 = self.fetch(x0, y0 + 1, c, border);
        let p11 = self.fetch(x0 + 1, y0 + 1, c, border);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear sample of a single-channel image with clamped borders, plus its
    /// partial derivatives with respect to `x` and `y`.
    pub(crate) fn sample_with_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = self.fetch(x0, y0, 0, Border::Clamp);
        let p10 = self.fetch(x0 + 1, y0, 0, Border::Clamp);
        let p01 = self.fetch(x0, y0 + 1, 0, Border::Clamp);
        let p11 = self.fetch(x0 + 1, y0 + 1, 0, Border::Clamp);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        let value = top + (bottom - top) * fy;
        // Outside the grid the clamped image is constant along the clamped axis.
        let gx = if x < 0.0 || x > (self.width - 1) as f64 {
            0.0
        } else {
            (p10 - p00) * (1.0 - fy) + (p11 - p01) * fy
        };
        let gy = if y < 0.0 || y > (self.height - 1) as f64 {
            0.0
        } else {
            bottom - top
        };
        (value, gx, gy)
    }

    #[inline]
    fn fetch(&self, x: i64, y: i64, c: usize, border: Border) -> f64 {
        let (w, h) = (self.width as i64, self.height as i64);
        match border {
            Border::Clamp => {
                let xi = x.clamp(0, w - 1) as usize;
                let yi = y.clamp(0, h - 1) as usize;
                self.get(xi, yi, c)
            }
            Border::Zero => {
                if x < 0 || y < 0 || x >= w || y >= h {
                    0.0
                } else {
                    self.get(x as usize, y as usize, c)
                }
            }
        }
    }

    /// Resamples every channel through a pull mapping: output pixel `p` reads `self` at `map(p)`.
    pub fn resample(
        &self,
        width: usize,
        height: usize,
        border: Border,
        map: impl Fn(f64, f64) -> (f64, f64),
    ) -> RasterImage {
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = map(x as f64, y as f64);
                for c in 0..self.channels {
                    data.push(self.sample(sx, sy, c, border).clamp(0.0, 1.0));
                }
            }
        }
        RasterImage {
            width,
            height,
            channels: self.channels,
            data,
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn flip_horizontal(&self) -> RasterImage {
        self.remap_pixels(|x, y| (self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> RasterImage {
        self.remap_pixels(|x, y| (x, self.height - 1 - y))
    }

    fn remap_pixels(&self, src: impl Fn(usize, usize) -> (usize, usize)) -> RasterImage {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let (sx, sy) = src(x, y);
                for c in 0..self.channels {
                    data.push(self.get(sx, sy, c));
                }
            }
        }
        RasterImage { data, ..*self }
    }

    /// Builds an image without validating the value range; callers guarantee `[0, 1]`.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(RasterImage::new(0, 3, 1, vec![]).is_err());
        assert!(RasterImage::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(RasterImage::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(RasterImage::new(1, 1, 1, vec![1.5]).is_err());
        assert!(RasterImage::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn bilinear_sampling() {
        let img = RasterImage::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(img.sample(0.5, 0.0, 0, Border::Clamp), 0.5);
        assert_eq!(img.sample(0.25, 0.7, 0, Border::Clamp), 0.25);
        assert_eq!(img.sample(-3.0, 0.0, 0, Border::Clamp), 0.0);
        assert_eq!(img.sample(5.0, 1.0, 0, Border::Clamp), 1.0);
        assert_eq!(img.sample(2.0, 0.0, 0, Border::Zero), 0.0);
        assert_eq!(img.sample(1.5, 0.0, 0, Border::Zero), 0.5);
    }

    #[test]
    fn sample_gradient_matches_difference() {
        let img = RasterImage::from_fn(5, 4, |x, y| (0.1 * x as f64 + 0.05 * (y * y) as f64).min(1.0)).unwrap();
        let (v, gx, gy) = img.sample_with_gradient(1.3, 1.6);
        assert!((v - img.sample(1.3, 1.6, 0, Border::Clamp)).abs() < 1e-15);
        let h = 1e-6;
        let fx = (img.sample(1.3 + h, 1.6, 0, Border::Clamp) - img.sample(1.3 - h, 1.6, 0, Border::Clamp)) / (2.0 * h);
        let fy = (img.sample(1.3, 1.6 + h, 0, Border::Clamp) - img.sample(1.3, 1.6 - h, 0, Border::Clamp)) / (2.0 * h);
        assert!((gx - fx).abs() < 1e-8);
        assert!((gy - fy).abs() < 1e-8);
    }

    #[test]
    fn channel_extraction() {
        let img = RasterImage::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(img.channel(1).data(), &[0.2, 0.5]);
    }
}
