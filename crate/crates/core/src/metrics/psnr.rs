use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_same_dim, masked_pixels};
use crate::error::Result;

/// PSNR numerator convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMode {
    /// `10 log10(255 / MSE)`, the form used by the reference evaluation.
    #[default]
    Paper,
    /// Conventional `10 log10(255² / MSE)`.
    Standard,
}

impl PsnrMode {
    fn peak(self) -> f64 {
        match self {
            PsnrMode::Paper => 255.0,
            PsnrMode::Standard => 255.0 * 255.0,
        }
    }
}

pub fn mse(a: &Array2<f32>, b: &Array2<f32>, mask: Option<&Array2<u8>>) -> Result<f64> {
    check_same_dim(a, b, mask)?;
    let pixels = masked_pixels(a.dim(), mask)?;
    let sum: f64 = pixels
        .iter()
        .map(|&(r, c)| {
            let d = a[[r, c]] as f64 - b[[r, c]] as f64;
            d * d
        })
        .sum();
    Ok(sum / pixels.len() as f64)
}

/// PSNR in dB; `f64::INFINITY` when the images agree exactly.
pub fn psnr(a: &Array2<f32>, b: &Array2<f32>, mode: PsnrMode) -> Result<f64> {
    psnr_masked(a, b, None, mode)
}

pub fn psnr_masked(a: &Array2<f32>, b: &Array2<f32>, mask: Option<&Array2<u8>>, mode: PsnrMode) -> Result<f64> {
    let mse = mse(a, b, mask)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (mode.peak() / mse).log10())
}
