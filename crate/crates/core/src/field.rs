//! Dense displacement fields.

use crate::error::{Error, Result};
use crate::geometry::{AffineTransform2D, Point};

/// Per-pixel `(dx, dy)` vectors in pixel units with pull semantics: the
/// warped image at `p` reads the source at `p + u(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    width: usize,
    height: usize,
    vectors: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyField);
        }
        if vectors.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "field {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("field has non-finite components".into()));
        }
        Ok(Self { width, height, vectors })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, [0.0, 0.0])
    }

    pub fn constant(width: usize, height: usize, v: [f64; 2]) -> Self {
        Self {
            width,
            height,
            vectors: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 2]) -> Self {
        let mut vectors = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                vectors.push(f(x, y));
            }
        }
        Self { width, height, vectors }
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
    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    pub(crate) fn vectors_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.vectors
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation with clamped borders.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let (w, h) = (self.width as i64, self.height as i64);
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let fetch = |xi: i64, yi: i64| {
            let xi = xi.clamp(0, w - 1) as usize;
            let yi = yi.clamp(0, h - 1) as usize;
            self.vectors[yi * self.width + xi]
        };
        let (x0, y0) = (x0f as i64, y0f as i64);
        let p00 = fetch(x0, y0);
        let p10 = fetch(x0 + 1, y0);
        let p01 = fetch(x0, y0 + 1);
        let p11 = fetch(x0 + 1, y0 + 1);
        let mut out = [0.0; 2];
        for c in 0..2 {
            let top = p00[c] + (p10[c] - p00[c]) * fx;
            let bottom = p01[c] + (p11[c] - p01[c]) * fx;
            out[c] = top + (bottom - top) * fy;
        }
        out
    }

    /// Maps a target-frame point into the source frame: `p + u(p)`.
    pub fn map_point(&self, p: Point) -> Point {
        let [dx, dy] = self.sample(p.x, p.y);
        Point::new(p.x + dx, p.y + dy)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.vectors.iter().map(|[dx, dy]| dx.hypot(*dy)).fold(0.0, f64::max)
    }

    /// Largest per-pixel vector difference to another field of the same size.
    pub fn max_deviation(&self, other: &DisplacementField) -> Result<f64> {
        self.require_same_dims(other)?;
        Ok(self
            .vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .fold(0.0, f64::max))
    }

    /// Pointwise sum of two fields of equal size.
    pub fn add(&self, other: &DisplacementField) -> Result<DisplacementField> {
        self.require_same_dims(other)?;
        let vectors = self
            .vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1]])
            .collect();
        Ok(DisplacementField { vectors, ..*self })
    }

    fn require_same_dims(&self, other: &DisplacementField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "fields {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Dense field equivalent to an affine transform: `u(p) = t(p) - p`.
pub fn bake_affine_to_field(t: &AffineTransform2D, width: usize, height: usize) -> DisplacementField {
    DisplacementField::from_fn(width, height, |x, y| {
        let p = Point::new(x as f64, y as f64);
        let q = t.apply(p);
        [q.x - p.x, q.y - p.y]
    })
}

/// Coordinate in a grid of size `from` that corresponds to pixel `i` of a
/// grid of size `to` covering the same extent.
#[inline]
pub(crate) fn area_coordinate(i: f64, from: usize, to: usize) -> f64 {
    (i + 0.5) * from as f64 / to as f64 - 0.5
}

/// Bilinear upsampling of both components. Vectors are rescaled by the
/// per-axis size ratio because displacements are measured in pixels of their
/// own grid.
pub fn upsample_field(u: &DisplacementField, new_width: usize, new_height: usize) -> Result<DisplacementField> {
    if new_width < u.width || new_height < u.height {
        return Err(Error::DimensionMismatch(format!(
            "cannot upsample {}x{} field to smaller {}x{}",
            u.width, u.height, new_width, new_height
        )));
    }
    Ok(resample_field(u, new_width, new_height))
}

pub(crate) fn resample_field(u: &DisplacementField, new_width: usize, new_height: usize) -> DisplacementField {
    let rx = new_width as f64 / u.width as f64;
    let ry = new_height as f64 / u.height as f64;
    DisplacementField::from_fn(new_width, new_height, |x, y| {
        let sx = area_coordinate(x as f64, u.width, new_width);
        let sy = area_coordinate(y as f64, u.height, new_height);
        let [dx, dy] = u.sample(sx, sy);
        [dx * rx, dy * ry]
    })
}
