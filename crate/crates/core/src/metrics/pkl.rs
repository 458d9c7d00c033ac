use ndarray::Array2;

use super::check_same_dim;
use crate::error::{Error, Result};

pub const PATCH: usize = 32;
pub const BINS: usize = 50;
/// Additive smoothing applied to both histograms before the log ratio.
pub const EPSILON: f64 = 1e-8;

/// Bin of value `v` among `bins` equal bins over `[0, 255]`.
fn bin(v: f32, bins: usize) -> usize {
    let b = (v as f64 / 255.0 * bins as f64).floor();
    b.clamp(0.0, (bins - 1) as f64) as usize
}

/// Normalized, smoothed histogram of the selected pixels, or `None` if no
/// pixel is selected.
fn histogram(values: impl Iterator<Item = f32>, bins: usize) -> Option<Vec<f64>> {
    let mut h = vec![0.0; bins];
    let mut n = 0usize;
    for v in values {
        h[bin(v, bins)] += 1.0;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let norm = 1.0 + bins as f64 * EPSILON;
    h.iter_mut()
        .for_each(|c| *c = (*c / n as f64 + EPSILON) / norm);
    Some(h)
}

/// `KL(p || q) = Σ p log(p / q)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| if p == q { 0.0 } else { p * (p / q).ln() })
        .sum()
}

/// Mean KL divergence between `bins`-bin histograms of corresponding
/// non-overlapping `patch × patch` blocks. Partial edge blocks are dropped.
pub fn pkl(a: &Array2<f32>, b: &Array2<f32>, patch: usize, bins: usize) -> Result<f64> {
    pkl_masked(a, b, None, patch, bins)
}

/// As [`pkl`], histogramming only in-mask pixels and skipping blocks with
/// no in-mask pixel.
pub fn pkl_masked(
    a: &Array2<f32>,
    b: &Array2<f32>,
    mask: Option<&Array2<u8>>,
    patch: usize,
    bins: usize,
) -> Result<f64> {
    check_same_dim(a, b, mask)?;
    if patch == 0 || bins == 0 {
        return Err(Error::InvalidArgument("patch size and bin count must be positive".into()));
    }
    let (h, w) = a.dim();
    if h < patch || w < patch {
        return Err(Error::ImageTooSmall {
            required: (patch, patch),
            found: (h, w),
        });
    }
    let keep = |r: usize, c: usize| mask.is_none_or(|m| m[[r, c]] != 0);
    let mut total = 0.0;
    let mut count = 0usize;
    for pr in 0..h / patch {
        for pc in 0..w / patch {
            let cells = || {
                (pr * patch..(pr + 1) * patch)
                    .flat_map(move |r| (pc * patch..(pc + 1) * patch).map(move |c| (r, c)))
                    .filter(|&(r, c)| keep(r, c))
            };
            let ha = histogram(cells().map(|p| a[p]), bins);
            let hb = histogram(cells().map(|p| b[p]), bins);
            if let (Some(ha), Some(hb)) = (ha, hb) {
                total += kl_divergence(&ha, &hb);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no patch contains an in-mask pixel".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, k: usize) -> Array2<f32> {
        Array2::from_shape_fn((h, w), |(r, c)| ((r * k + c * 3) % 256) as f32)
    }

    #[test]
    fn identical_images_have_zero_divergence() {
        let a = ramp(64, 96, 5);
        assert_eq!(pkl(&a, &a, PATCH, BINS).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_single_bin_closed_form() {
        let a = Array2::from_elem((32, 32), 10.0f32);
        let b = Array2::from_elem((32, 32), 200.0f32);
        let eps = EPSILON;
        let d = BINS as f64;
        let hi = (1.0 + eps) / (1.0 + d * eps);
        let lo = eps / (1.0 + d * eps);
        // Two bins contribute: a's bin (hi vs lo) and b's bin (lo vs hi).
        let expected = hi * (hi / lo).ln() + lo * (lo / hi).ln();
        let got = pkl(&a, &b, PATCH, BINS).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
        assert!(got.is_finite() && got > 15.0);
    }

    #[test]
    fn within_patch_permutation_is_invisible() {
        let a = ramp(64, 64, 5);
        let b = ramp(64, 64, 11);
        let reference = pkl(&a, &b, PATCH, BINS).unwrap();
        // Reverse every 32x32 block of both images the same way.
        let flip = |img: &Array2<f32>| {
            Array2::from_shape_fn((64, 64), |(r, c)| {
                let (br, bc) = (r / 32 * 32, c / 32 * 32);
                img[[br + 31 - (r - br), bc + 31 - (c - bc)]]
            })
        };
        let got = pkl(&flip(&a), &flip(&b), PATCH, BINS).unwrap();
        assert!((got - reference).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_and_nonnegative() {
        let a = ramp(64, 64, 5);
        let b = a.mapv(|v| (v * 0.5 + 20.0).min(255.0));
        let ab = pkl(&a, &b, PATCH, BINS).unwrap();
        let ba = pkl(&b, &a, PATCH, BINS).unwrap();
        assert!(ab >= 0.0 && ba >= 0.0);
        assert_ne!(ab, ba);
    }

    #[test]
    fn partial_patches_are_dropped() {
        let a = ramp(40, 40, 5);
        let b = ramp(40, 40, 7);
        let cropped = |img: &Array2<f32>| img.slice(ndarray::s![..32, ..32]).to_owned();
        assert_eq!(
            pkl(&a, &b, PATCH, BINS).unwrap(),
            pkl(&cropped(&a), &cropped(&b), PATCH, BINS).unwrap()
        );
        let small = Array2::<f32>::zeros((16, 64));
        assert!(pkl(&small, &small, PATCH, BINS).is_err());
    }
}
