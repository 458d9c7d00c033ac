use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separable, depth-dependent point-spread function.
///
/// Axially: Gaussian envelope (σ = `axial_sigma` samples) times a cosine
/// carrier of `carrier_cycles_per_sample`, truncated at ±4σ. Laterally: a
/// normalized Gaussian across scanlines, truncated at ±3σ, whose σ grows
/// linearly from `lateral_sigma_near` at the first sample to
/// `lateral_sigma_far` at the last.
///
/// The carrier is expressed per axial sample rather than in MHz: the beam grid
/// is far coarser than the physical RF sampling rate, so the carrier is kept
/// below Nyquist at a fixed fraction of the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfParams {
    pub carrier_cycles_per_sample: f64,
    pub axial_sigma: f64,
    pub lateral_sigma_near: f64,
    pub lateral_sigma_far: f64,
}

impl Default for PsfParams {
    fn default() -> Self {
        PsfParams {
            carrier_cycles_per_sample: 0.25,
            axial_sigma: 2.0,
            lateral_sigma_near: 0.5,
            lateral_sigma_far: 2.0,
        }
    }
}

impl PsfParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.carrier_cycles_per_sample > 0.0
            && self.carrier_cycles_per_sample < 0.5
            && self.axial_sigma > 0.0
            && self.lateral_sigma_near > 0.0
            && self.lateral_sigma_far > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid point-spread function {self:?}")))
        }
    }

    pub(crate) fn axial_kernel(&self) -> Vec<f64> {
        let half = (4.0 * self.axial_sigma).ceil() as i64;
        let w = 2.0 * std::f64::consts::PI * self.carrier_cycles_per_sample;
        (-half..=half)
            .map(|k| {
                let k = k as f64;
                (-k * k / (2.0 * self.axial_sigma * self.axial_sigma)).exp() * (w * k).cos()
            })
            .collect()
    }

    pub(crate) fn lateral_sigma(&self, sample: usize, axial_samples: usize) -> f64 {
        let t = if axial_samples > 1 {
            sample as f64 / (axial_samples - 1) as f64
        } else {
            0.0
        };
        self.lateral_sigma_near + (self.lateral_sigma_far - self.lateral_sigma_near) * t
    }
}

/// Normalized Gaussian taps for offsets `-half..=half`.
pub(crate) fn gaussian_kernel(sigma: f64, radius: f64) -> Vec<f64> {
    let half = (radius * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Zero-padded 1-D convolution with a centred odd kernel.
pub(crate) fn convolve_same(signal: &[f64], kernel: &[f64], out: &mut [f64]) {
    let half = (kernel.len() / 2) as isize;
    let n = signal.len() as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = 0.0;
        for (j, &k) in kernel.iter().enumerate() {
            let src = i + j as isize - half;
            if (0..n).contains(&src) {
                acc += k * signal[src as usize];
            }
        }
        *o = acc;
    }
}

/// Convolves an echo image (scanlines × samples) with the PSF.
pub fn apply_psf(echo: &Array2<f64>, psf: &PsfParams) -> Array2<f64> {
    let (ns, nz) = echo.dim();
    let axial = psf.axial_kernel();

    let mut rf_axial = Array2::<f64>::zeros((ns, nz));
    rf_axial
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(echo.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, row)| {
            let src = row.to_vec();
            let mut dst = vec![0.0; nz];
            convolve_same(&src, &axial, &mut dst);
            out.iter_mut().zip(dst).for_each(|(o, v)| *o = v);
        });

    let mut rf = Array2::<f64>::zeros((ns, nz));
    rf.axis_iter_mut(Axis(1))
        .into_par_iter()
        .zip(rf_axial.axis_iter(Axis(1)).into_par_iter())
        .enumerate()
        .for_each(|(z, (mut out, col))| {
            let lateral = gaussian_kernel(psf.lateral_sigma(z, nz), 3.0);
            let src = col.to_vec();
            let mut dst = vec![0.0; ns];
            convolve_same(&src, &lateral, &mut dst);
            out.iter_mut().zip(dst).for_each(|(o, v)| *o = v);
        });
    rf
}
