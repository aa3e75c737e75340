use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::image::{Border, RasterImage};

/// Pull warp: `out(p) = img(p + u(p))`, bilinear, clamped at the edges.
pub fn warp_image(img: &RasterImage, u: &DisplacementField) -> Result<RasterImage> {
    check_dims(img, u)?;
    let (w, c) = (img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for (i, [dx, dy]) in u.vectors().iter().enumerate() {
        let (x, y) = ((i % w) as f64 + dx, (i / w) as f64 + dy);
        for ch in 0..c {
            data.push(img.sample(x, y, ch, Border::Clamp));
        }
    }
    Ok(RasterImage::from_raw(w, img.height(), c, data))
}

pub(crate) fn check_dims(img: &RasterImage, u: &DisplacementField) -> Result<()> {
    if img.width() != u.width() || img.height() != u.height() {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but field is {}x{}",
            img.width(),
            img.height(),
            u.width(),
            u.height()
        )));
    }
    Ok(())
}

/// Warped single-channel values together with the image gradient at each
/// sampled position.
pub(crate) struct WarpSample {
    pub image: RasterImage,
    pub grad: Vec<[f64; 2]>,
}

/// Single-channel pull warp through `u(p) = base(p) + sign * v(p)`.
pub(crate) fn warp_with_gradient(
    img: &RasterImage,
    base: Option<&[[f64; 2]]>,
    v: &[[f64; 2]],
    sign: f64,
) -> WarpSample {
    let w = img.width();
    let mut values = Vec::with_capacity(v.len());
    let mut grad = Vec::with_capacity(v.len());
    for (i, d) in v.iter().enumerate() {
        let b = base.map_or([0.0, 0.0], |b| b[i]);
        let x = (i % w) as f64 + (b[0] + sign * d[0]);
        let y = (i / w) as f64 + (b[1] + sign * d[1]);
        let (value, gx, gy) = img.sample_with_gradient(x, y);
        values.push(value);
        grad.push([gx, gy]);
    }
    WarpSample {
        image: RasterImage::from_raw(w, img.height(), 1, values),
        grad,
    }
}
