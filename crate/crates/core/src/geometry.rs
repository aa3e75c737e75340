//! Points and 2-D affine transforms.
//!
//! Every transform in this crate uses pull semantics: it maps a coordinate in
//! the target frame to the coordinate in the source frame that should be read.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

const DET_EPS: f64 = 1e-12;

/// A 2×3 affine matrix `(a11, a12, t1, a21, a22, t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    m: [f64; 6],
}

impl AffineTransform2D {
    pub const IDENTITY: AffineTransform2D = AffineTransform2D {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    /// Validates that the linear part is invertible.
    pub fn new(m: [f64; 6]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateTransform("non-finite coefficient".into()));
        }
        let t = Self { m };
        if t.determinant().abs() <= DET_EPS {
            return Err(Error::DegenerateTransform(format!(
                "determinant {} is zero",
                t.determinant()
            )));
        }
        Ok(t)
    }

    /// Builds a transform without the invertibility check.
    pub const fn from_raw(m: [f64; 6]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_raw([1.0, 0.0, tx, 0.0, 1.0, ty])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::from_raw([sx, 0.0, 0.0, 0.0, sy, 0.0])
    }

    /// Rotation about the origin by `degrees`. With y pointing down this turns
    /// the x axis towards the y axis.
    pub fn rotation(degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self::from_raw([c, -s, 0.0, s, c, 0.0])
    }

    pub fn rotation_about(degrees: f64, center: Point) -> Self {
        Self::translation(center.x, center.y)
            .compose(&Self::rotation(degrees))
            .compose(&Self::translation(-center.x, -center.y))
    }

    pub fn matrix(&self) -> [f64; 6] {
        self.m
    }

    /// Row-major homogeneous 3×3 form.
    pub fn homogeneous(&self) -> [f64; 9] {
        let m = self.m;
        [m[0], m[1], m[2], m[3], m[4], m[5], 0.0, 0.0, 1.0]
    }

    pub fn determinant(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &AffineTransform2D) -> AffineTransform2D {
        let a = self.m;
        let b = other.m;
        AffineTransform2D::from_raw([
            a[0] * b[0] + a[1] * b[3],
            a[0] * b[1] + a[1] * b[4],
            a[0] * b[2] + a[1] * b[5] + a[2],
            a[3] * b[0] + a[4] * b[3],
            a[3] * b[1] + a[4] * b[4],
            a[3] * b[2] + a[4] * b[5] + a[5],
        ])
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.m;
        Point::new(m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5])
    }

    pub fn inverse(&self) -> Result<AffineTransform2D> {
        let det = self.determinant();
        if det.abs() <= DET_EPS || !det.is_finite() {
            return Err(Error::DegenerateTransform(format!("determinant {det} is zero")));
        }
        let [a, b, tx, c, d, ty] = self.m;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(AffineTransform2D::from_raw([
            ia,
            ib,
            -(ia * tx + ib * ty),
            ic,
            id,
            -(ic * tx + id * ty),
        ]))
    }

    /// Singular values of the linear part, ascending.
    pub fn scale_factors(&self) -> Result<(f64, f64)> {
        if self.determinant().abs() <= DET_EPS {
            return Err(Error::DegenerateTransform("linear part has zero determinant".into()));
        }
        let [a, b, _, c, d, _] = self.m;
        let e = (a + d) / 2.0;
        let f = (a - d) / 2.0;
        let g = (c + b) / 2.0;
        let h = (c - b) / 2.0;
        let q = e.hypot(h);
        let r = f.hypot(g);
        let s1 = q + r;
        let s2 = (q - r).abs();
        Ok((s2.min(s1), s1.max(s2)))
    }

    /// Rotation angle of the linear part in degrees, from its polar decomposition.
    pub fn rotation_degrees(&self) -> f64 {
        let [a, b, _, c, d, _] = self.m;
        (c - b).atan2(a + d).to_degrees()
    }

    pub fn translation_part(&self) -> Point {
        Point::new(self.m[2], self.m[5])
    }

    pub fn max_abs_diff(&self, other: &AffineTransform2D) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}
