use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::AffineTransform2D;

const HEADER: &str = "# pull transform: maps target pixel (x, y, 1) to source pixel coordinates\n\
# pixel centres at integers, origin at the top-left pixel, x right, y down\n";

pub fn format_affine(t: &AffineTransform2D) -> String {
    let m = t.matrix();
    format!(
        "{HEADER}{} {} {}\n{} {} {}\n0 0 1\n",
        m[0], m[1], m[2], m[3], m[4], m[5]
    )
}

/// Parses nine numbers (comments start with `#`); the last row must be `0 0 1`.
pub fn parse_affine(text: &str) -> Result<AffineTransform2D> {
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("affine: `{s}` is not a number")))
        })
        .collect::<Result<_>>()?;
    if values.len() != 9 {
        return Err(Error::Config(format!(
            "affine: expected 9 numbers, got {}",
            values.len()
        )));
    }
    if values[6..] != [0.0, 0.0, 1.0] {
        return Err(Error::Config("affine: last row must be 0 0 1".into()));
    }
    AffineTransform2D::new([values[0], values[1], values[2], values[3], values[4], values[5]])
}

pub fn save_affine(t: &AffineTransform2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_affine(t)).map_err(|e| Error::file(path, e))
}

pub fn load_affine(path: impl AsRef<Path>) -> Result<AffineTransform2D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_affine(&text).map_err(|e| Error::file(path, e))
}
