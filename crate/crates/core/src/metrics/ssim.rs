use ndarray::Array2;

use super::{apply_mask, check_same_dim, masked_pixels};
use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_taps() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as i64;
    let mut taps = [0.0; WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as i64 - half;
        *t = (-((d * d) as f64) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian filter with replicated borders.
fn blur(img: &Array2<f64>, taps: &[f64; WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let half = (WINDOW / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = Array2::<f64>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            rows[[r, c]] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * img[[r, clamp(c as isize + k as isize - half, w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            out[[r, c]] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[[clamp(r as isize + k as isize - half, h), c]])
                .sum();
        }
    }
    out
}

/// Local SSIM map: 11×11 Gaussian window (σ = 1.5), replicated borders,
/// `c1 = (0.01·255)²`, `c2 = (0.03·255)²`.
pub fn ssim_map(a: &Array2<f32>, b: &Array2<f32>) -> Result<Array2<f64>> {
    check_same_dim(a, b, None)?;
    let (h, w) = a.dim();
    if h < WINDOW || w < WINDOW {
        return Err(Error::ImageTooSmall {
            required: (WINDOW, WINDOW),
            found: (h, w),
        });
    }
    let taps = gaussian_taps();
    let a = a.mapv(|v| v as f64);
    let b = b.mapv(|v| v as f64);
    let mu_a = blur(&a, &taps);
    let mu_b = blur(&b, &taps);
    let aa = blur(&(&a * &a), &taps);
    let bb = blur(&(&b * &b), &taps);
    let ab = blur(&(&a * &b), &taps);
    Ok(Array2::from_shape_fn((h, w), |p| {
        let (ma, mb) = (mu_a[p], mu_b[p]);
        let va = aa[p] - ma * ma;
        let vb = bb[p] - mb * mb;
        let cov = ab[p] - ma * mb;
        ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
    }))
}

/// Mean SSIM over the whole image.
pub fn ssim(a: &Array2<f32>, b: &Array2<f32>) -> Result<f64> {
    ssim_masked(a, b, None)
}

/// Mean SSIM over in-mask pixels, with out-of-mask pixels of both images
/// zeroed first so they cannot leak in through the window.
pub fn ssim_masked(a: &Array2<f32>, b: &Array2<f32>, mask: Option<&Array2<u8>>) -> Result<f64> {
    check_same_dim(a, b, mask)?;
    let pixels = masked_pixels(a.dim(), mask)?;
    let map = match mask {
        Some(m) => ssim_map(&apply_mask(a, m), &apply_mask(b, m))?,
        None => ssim_map(a, b)?,
    };
    Ok(pixels.iter().map(|&p| map[p]).sum::<f64>() / pixels.len() as f64)
}
