use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::psf::{convolve_same, gaussian_kernel};
use super::{AcousticParams, PolarImage};
use crate::error::Result;
use crate::phantom::TissueMap;
use crate::stats;

/// Envelope of one RF line by quadrature demodulation at `carrier` cycles
/// per sample: mix down to baseband, low-pass both channels with a
/// normalized Gaussian of width `sigma`, and take twice the magnitude.
pub fn demodulate(rf: &[f64], carrier: f64, sigma: f64) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * carrier;
    let i: Vec<f64> = rf
        .iter()
        .enumerate()
        .map(|(z, &v)| v * (w * z as f64).cos())
        .collect();
    let q: Vec<f64> = rf
        .iter()
        .enumerate()
        .map(|(z, &v)| -v * (w * z as f64).sin())
        .collect();
    let lp = gaussian_kernel(sigma, 4.0);
    let mut il = vec![0.0; rf.len()];
    let mut ql = vec![0.0; rf.len()];
    convolve_same(&i, &lp, &mut il);
    convolve_same(&q, &lp, &mut ql);
    il.iter()
        .zip(&ql)
        .map(|(a, b)| 2.0 * a.hypot(*b))
        .collect()
}

/// Envelope image (scanlines × samples) of an RF image, before gain.
pub fn envelope(rf: &Array2<f64>, params: &AcousticParams) -> Array2<f64> {
    let mut env = Array2::zeros(rf.dim());
    env.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(rf.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, line)| {
            let line = line.to_vec();
            let e = demodulate(&line, params.psf.carrier_cycles_per_sample, params.demod_sigma);
            out.iter_mut().zip(e).for_each(|(o, v)| *o = v);
        });
    env
}

/// Envelope detection, time-gain compensation and log compression.
///
/// Gain is `exp(2 z mu_bg)` with `mu_bg` the background tissue's attenuation,
/// so extra attenuation (shadows) survives. The compensated envelope is
/// referenced to its `reference_percentile` value and compressed to
/// `dynamic_range_db`, mapping `[-DR, 0]` dB affinely onto `[0, 255]`.
pub fn post_process(rf: &PolarImage, map: &TissueMap, params: &AcousticParams) -> Result<PolarImage> {
    let mut env = envelope(&rf.samples, params);
    let mu_bg = map.background_properties().attenuation_mu;
    for (z, mut col) in env.axis_iter_mut(Axis(1)).enumerate() {
        let gain = (2.0 * z as f64 * mu_bg).exp();
        col.mapv_inplace(|v| v * gain);
    }

    let values: Vec<f64> = env.iter().copied().collect();
    let reference = stats::percentile(&values, params.reference_percentile).unwrap_or(0.0);
    if !(reference > 0.0 && reference.is_finite()) {
        return PolarImage::new(Array2::zeros(rf.samples.dim()), rf.geometry);
    }
    let bmode = env.mapv(|e| compress(e, reference, params.dynamic_range_db));
    PolarImage::new(bmode, rf.geometry)
}

/// Log compression of one envelope value into `[0, 255]`.
pub(crate) fn compress(env: f64, reference: f64, dynamic_range_db: f64) -> f64 {
    if env <= 0.0 {
        return 0.0;
    }
    let db = (20.0 * (env / reference).log10()).clamp(-dynamic_range_db, 0.0);
    255.0 * (db + dynamic_range_db) / dynamic_range_db
}
