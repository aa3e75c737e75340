use crate::field::DisplacementField;

/// Mean squared forward difference of both components, with nothing added
/// past the last column or row.
///
/// Summation order: pixels row-major; per pixel, component dx then dy; per
/// component the horizontal term then the vertical term. The sum is divided by
/// the pixel count once at the end. The gradient is returned per pixel.
pub fn diffusive_regularization(u: &DisplacementField) -> (f64, Vec<[f64; 2]>) {
    let (w, h) = (u.width(), u.height());
    let v = u.vectors();
    let area = (w * h) as f64;
    let mut sum = 0.0;
    let mut grad = vec![[0.0; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for c in 0..2 {
                if x + 1 < w {
                    let d = v[i + 1][c] - v[i][c];
                    sum += d * d;
                    grad[i + 1][c] += 2.0 * d;
                    grad[i][c] -= 2.0 * d;
                }
                if y + 1 < h {
                    let d = v[i + w][c] - v[i][c];
                    sum += d * d;
                    grad[i + w][c] += 2.0 * d;
                    grad[i][c] -= 2.0 * d;
                }
            }
        }
    }
    for g in &mut grad {
        g[0] /= area;
        g[1] /= area;
    }
    (sum / area, grad)
}
