//! Translation quality metrics: PSNR, SSIM, patch-wise KL divergence and
//! the Fréchet distance between feature distributions, plus the masked
//! evaluation protocol that aggregates them over a dataset split.

mod evaluate;
pub mod features;
mod frechet;
mod pkl;
mod psnr;
mod ssim;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use evaluate::{
    evaluate, format_value, render_table, EvalOptions, MetricsReport, PairMetrics, PredictionSource, Summary,
    HIGH_PERCENTILE, LOW_PERCENTILE,
};
pub use features::{FeatureExtractor, HistogramGradient};
pub use frechet::{frechet_distance, frechet_from_moments, FeatureMatrix, COVARIANCE_RIDGE};
pub use pkl::{kl_divergence, pkl, pkl_masked};
pub use psnr::{mse, psnr, psnr_masked, PsnrMode};
pub use ssim::{ssim, ssim_map, ssim_masked};

pub mod defaults {
    pub use super::pkl::{BINS as PKL_BINS, EPSILON as PKL_EPSILON, PATCH as PKL_PATCH};
    pub use super::ssim::{C1 as SSIM_C1, C2 as SSIM_C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};
}

pub(crate) fn check_same_dim(a: &Array2<f32>, b: &Array2<f32>, mask: Option<&Array2<u8>>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if let Some(m) = mask {
        if m.dim() != a.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                found: m.dim(),
            });
        }
    }
    Ok(())
}

/// Indices of selected pixels (all pixels without a mask); errors if none.
pub(crate) fn masked_pixels((h, w): (usize, usize), mask: Option<&Array2<u8>>) -> Result<Vec<(usize, usize)>> {
    let pixels: Vec<_> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&p| mask.is_none_or(|m| m[p] != 0))
        .collect();
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("no pixels selected by mask".into()));
    }
    Ok(pixels)
}

pub(crate) fn apply_mask(img: &Array2<f32>, mask: &Array2<u8>) -> Array2<f32> {
    let mut out = img.clone();
    out.zip_mut_with(mask, |v, &m| {
        if m == 0 {
            *v = 0.0
        }
    });
    out
}
