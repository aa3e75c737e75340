use crate::error::{Error, Result};
use crate::image::RasterImage;

const LOG_FLOOR: f64 = 1e-12;

/// Lower bin and fractional offset of an intensity under the triangular
/// kernel: the value spreads `1 - f` onto bin `i` and `f` onto bin `i + 1`.
#[inline]
fn bin_position(v: f64, bins: usize) -> (usize, f64) {
    let z = v.clamp(0.0, 1.0) * (bins - 1) as f64;
    let i = (z.floor() as usize).min(bins - 2);
    (i, z - i as f64)
}

/// Window origins along one axis: every `stride` pixels, plus one window
/// flush with the far edge when the grid does not reach it.
pub(crate) fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=len - window).step_by(stride).collect();
    if starts.last().is_none_or(|&s| s + window < len) {
        starts.push(len - window);
    }
    starts
}

/// Entropy of the Parzen-smoothed intensity histogram of a whole image.
pub fn parzen_entropy(img: &RasterImage, bins: usize) -> Result<f64> {
    img.require_channels(1)?;
    check_bins(bins)?;
    let mut hist = vec![0.0; bins];
    for &v in img.data() {
        let (i, f) = bin_position(v, bins);
        hist[i] += 1.0 - f;
        hist[i + 1] += f;
    }
    let n = img.data().len() as f64;
    Ok(-hist
        .iter()
        .map(|&c| c / n)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::Config(format!(
            "mutual information needs at least 2 bins, got {bins}"
        )));
    }
    Ok(())
}

/// Mean mutual information (nats) over square windows, and its gradient with
/// respect to every pixel of `a`.
///
/// Each window builds a joint histogram with a triangular Parzen kernel, so
/// each pixel pair contributes to at most four cells and the value is
/// piecewise smooth in the intensities of `a`.
pub fn local_mutual_information(
    a: &RasterImage,
    b: &RasterImage,
    bins: usize,
    window: usize,
    stride: usize,
) -> Result<(f64, Vec<f64>)> {
    a.require_channels(1)?;
    b.require_channels(1)?;
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    check_bins(bins)?;
    let (w, h) = (a.width(), a.height());
    if window == 0 || window > w.min(h) {
        return Err(Error::Config(format!("window {window} does not fit a {w}x{h} image")));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }

    let pos_a: Vec<(usize, f64)> = a.data().iter().map(|&v| bin_position(v, bins)).collect();
    let pos_b: Vec<(usize, f64)> = b.data().iter().map(|&v| bin_position(v, bins)).collect();
    let xs = window_starts(w, window, stride);
    let ys = window_starts(h, window, stride);
    let count = (xs.len() * ys.len()) as f64;
    let n = (window * window) as f64;
    let slope = (bins - 1) as f64;

    let mut total = 0.0;
    let mut grad = vec![0.0; w * h];
    let mut joint = vec![0.0; bins * bins];
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    let mut table = vec![0.0; bins * bins];
    for &y0 in &ys {
        for &x0 in &xs {
            joint.iter_mut().for_each(|v| *v = 0.0);
            for y in y0..y0 + window {
                for x in x0..x0 + window {
                    let (ia, fa) = pos_a[y * w + x];
                    let (jb, fb) = pos_b[y * w + x];
                    let row = ia * bins + jb;
                    joint[row] += (1.0 - fa) * (1.0 - fb);
                    joint[row + 1] += (1.0 - fa) * fb;
                    joint[row + bins] += fa * (1.0 - fb);
                    joint[row + bins + 1] += fa * fb;
                }
            }
            pa.iter_mut().for_each(|v| *v = 0.0);
            pb.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..bins {
                for j in 0..bins {
                    let p = joint[i * bins + j] / n;
                    joint[i * bins + j] = p;
                    pa[i] += p;
                    pb[j] += p;
                }
            }
            let mut mi = 0.0;
            for i in 0..bins {
                for j in 0..bins {
                    let p = joint[i * bins + j];
                    if p > 0.0 {
                        mi += p * (p / (pa[i] * pb[j])).ln();
                    }
                    table[i * bins + j] = p.max(LOG_FLOOR).ln() - pa[i].max(LOG_FLOOR).ln();
                }
            }
            total += mi;

            // d MI / d a_p = (1/n) sum_ij w_i'(a_p) w_j(b_p) (ln P_ij - ln pa_i)
            let scale = slope / (n * count);
            for y in y0..y0 + window {
                for x in x0..x0 + window {
                    let (ia, _) = pos_a[y * w + x];
                    let (jb, fb) = pos_b[y * w + x];
                    let lo = ia * bins + jb;
                    let hi = lo + bins;
                    let d = (1.0 - fb) * (table[hi] - table[lo]) + fb * (table[hi + 1] - table[lo + 1]);
                    grad[y * w + x] += scale * d;
                }
            }
        }
    }
    Ok((total / count, grad))
}
