//! Scanline ray marching, speckle synthesis and B-mode formation.
//!
//! Each scanline is marched from the probe surface to full depth. Along the
//! way the ray accumulates round-trip attenuation and reflection losses at
//! impedance boundaries, and collects echoes from a random scatterer field.
//! Several jittered rays and several independent elevational scatterer
//! layers are averaged incoherently per scanline; the averaged echo image is
//! then blurred by a depth-dependent point-spread function to form an
//! RF-like signal, which is envelope detected, gain compensated and log
//! compressed.

mod bmode;
mod psf;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::TissueMap;
use crate::rng;

pub use bmode::{demodulate, envelope, post_process};
pub use psf::{apply_psf, PsfParams};

/// Convex-probe beam geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGeometry {
    pub scanline_count: usize,
    pub axial_samples: usize,
    /// Sector opening angle in degrees.
    pub fov_deg: f64,
    /// Imaging depth below the probe surface in cm.
    pub depth_cm: f64,
    /// Distance from the virtual apex to the probe surface in cm.
    pub apex_cm: f64,
    pub frequency_mhz: f64,
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self::desk()
    }
}

impl BeamGeometry {
    /// Desk-scale preset: 128 scanlines × 512 samples.
    pub fn desk() -> Self {
        BeamGeometry {
            scanline_count: 128,
            axial_samples: 512,
            fov_deg: 70.0,
            depth_cm: 15.0,
            apex_cm: 5.0,
            frequency_mhz: 8.0,
        }
    }

    /// Full-size preset with 3072 axial samples.
    pub fn paper() -> Self {
        BeamGeometry {
            scanline_count: 256,
            axial_samples: 3072,
            ..Self::desk()
        }
    }

    /// Places the apex so that the sector's top arc spans `fraction` of the
    /// bottom arc's chord (and so of the image width).
    pub fn with_top_arc_fraction(mut self, fraction: f64) -> Self {
        let f = fraction.clamp(0.0, 0.95);
        self.apex_cm = f * self.depth_cm / (1.0 - f);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scanline_count < 1 || self.axial_samples < 1 {
            return Err(Error::Config(format!(
                "beam grid must be at least 1x1, got {}x{}",
                self.scanline_count, self.axial_samples
            )));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config(format!(
                "field of view must be in (0, 180) degrees, got {}",
                self.fov_deg
            )));
        }
        if !(self.depth_cm > 0.0 && self.depth_cm.is_finite()) {
            return Err(Error::Config(format!("depth must be positive, got {}", self.depth_cm)));
        }
        if !(self.apex_cm >= 0.0 && self.apex_cm.is_finite()) {
            return Err(Error::Config(format!("apex offset must be >= 0, got {}", self.apex_cm)));
        }
        if !(self.frequency_mhz > 0.0 && self.frequency_mhz.is_finite()) {
            return Err(Error::Config(format!(
                "frequency must be positive, got {}",
                self.frequency_mhz
            )));
        }
        Ok(())
    }

    pub fn axial_step_cm(&self) -> f64 {
        self.depth_cm / self.axial_samples as f64
    }

    pub fn scanline_step_deg(&self) -> f64 {
        self.fov_deg / self.scanline_count as f64
    }

    /// Steering angle of scanline `s`'s centre.
    pub fn scanline_angle_deg(&self, s: usize) -> f64 {
        -self.fov_deg / 2.0 + (s as f64 + 0.5) * self.scanline_step_deg()
    }

    /// Depth of axial sample `z`'s centre.
    pub fn sample_depth_cm(&self, z: usize) -> f64 {
        (z as f64 + 0.5) * self.axial_step_cm()
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.scanline_count, self.axial_samples)
    }
}

/// Rays per scanline and elevational layers of one simulation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimQuality {
    pub rays_per_scanline: u32,
    pub elevational_layers: u32,
}

impl SimQuality {
    pub const LOW: SimQuality = SimQuality {
        rays_per_scanline: 1,
        elevational_layers: 1,
    };
    pub const HIGH: SimQuality = SimQuality {
        rays_per_scanline: 32,
        elevational_layers: 3,
    };

    pub fn validate(&self) -> Result<()> {
        if self.rays_per_scanline == 0 || self.elevational_layers == 0 {
            return Err(Error::Config(format!(
                "simulation quality needs at least one ray and one layer, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn passes(&self) -> u32 {
        self.rays_per_scanline * self.elevational_layers
    }
}

/// Fixed simulator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcousticParams {
    pub lq: SimQuality,
    pub hq: SimQuality,
    /// Echo amplitude per unit intensity reflection coefficient.
    pub boundary_gain: f64,
    /// Scatterer sub-columns per scanline; jittered rays pick among them.
    pub lateral_oversampling: usize,
    pub psf: PsfParams,
    pub dynamic_range_db: f64,
    /// Envelope percentile mapped to full brightness.
    pub reference_percentile: f64,
    /// Gaussian low-pass width (samples) applied after demodulation.
    pub demod_sigma: f64,
}

impl Default for AcousticParams {
    fn default() -> Self {
        AcousticParams {
            lq: SimQuality::LOW,
            hq: SimQuality::HIGH,
            boundary_gain: 50.0,
            lateral_oversampling: 32,
            psf: PsfParams::default(),
            dynamic_range_db: 60.0,
            reference_percentile: 98.0,
            demod_sigma: 1.5,
        }
    }
}

impl AcousticParams {
    pub fn validate(&self) -> Result<()> {
        self.lq.validate()?;
        self.hq.validate()?;
        self.psf.validate()?;
        if self.lateral_oversampling == 0 {
            return Err(Error::Config("lateral oversampling must be >= 1".into()));
        }
        if !(self.boundary_gain >= 0.0 && self.dynamic_range_db > 0.0 && self.demod_sigma > 0.0) {
            return Err(Error::Config(format!("invalid acoustic constants {self:?}")));
        }
        if !(0.0..=100.0).contains(&self.reference_percentile) {
            return Err(Error::Config("reference percentile must be in [0, 100]".into()));
        }
        Ok(())
    }
}

/// Scalar image on the beam grid (scanlines × axial samples).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    pub samples: Array2<f64>,
    pub geometry: BeamGeometry,
}

impl PolarImage {
    pub fn new(samples: Array2<f64>, geometry: BeamGeometry) -> Result<Self> {
        if samples.dim() != geometry.dim() {
            return Err(Error::DimensionMismatch {
                expected: geometry.dim(),
                found: samples.dim(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polar image"));
        }
        Ok(PolarImage { samples, geometry })
    }

    pub fn zeros(geometry: BeamGeometry) -> Self {
        PolarImage {
            samples: Array2::zeros(geometry.dim()),
            geometry,
        }
    }
}

/// Random scatterer amplitudes for one elevational layer.
///
/// Stored at `lateral_oversampling` sub-columns per scanline so that jittered
/// rays within one scanline see different scatterers. Sub-column `c` belongs
/// to scanline `c / oversampling` and takes that scanline's tissue labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererField {
    /// (scanlines · oversampling) × axial samples.
    pub amplitudes: Array2<f32>,
    pub oversampling: usize,
}

impl ScattererField {
    /// Sub-column hit by a ray on `scanline` with lateral offset `jitter`
    /// (in scanline widths, within ±0.5).
    pub fn column(&self, scanline: usize, jitter: f64) -> usize {
        let k = self.oversampling;
        let offset = ((0.5 + jitter) * k as f64).floor().clamp(0.0, (k - 1) as f64) as usize;
        scanline * k + offset
    }
}

/// Per-sample result of marching one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayResult {
    pub echo: Vec<f64>,
    /// Round-trip transmission factor reaching each sample.
    pub transmission: Vec<f64>,
}

/// Intensity reflection coefficient between impedances `z1` and `z2`.
pub fn reflection_coefficient(z1: f64, z2: f64) -> f64 {
    let r = (z2 - z1) / (z2 + z1);
    r * r
}

/// Seed of elevational layer `layer` for a run seeded with `seed`. Layer 0
/// is shared by every pass using the same seed.
pub fn layer_seed(seed: u64, layer: u32) -> u64 {
    rng::mix(&[rng::DOMAIN_LAYER, seed, layer as u64])
}

/// Simulation engine holding the fixed acoustic constants.
#[derive(Debug, Clone, Default)]
pub struct Simulator {
    params: AcousticParams,
}

impl Simulator {
    pub fn new(params: AcousticParams) -> Result<Self> {
        params.validate()?;
        Ok(Simulator { params })
    }

    pub fn params(&self) -> &AcousticParams {
        &self.params
    }

    /// Draws the scatterer field of one layer. Each cell holds a scatterer
    /// with probability `scatterer_density` of its tissue, with amplitude
    /// drawn from `Normal(scatterer_mean, scatterer_std)`; empty cells are 0.
    pub fn scatterer_field(&self, map: &TissueMap, layer_seed: u64) -> ScattererField {
        let k = self.params.lateral_oversampling;
        let (ns, nz) = map.geometry().dim();
        let props = map.properties();
        let density = props.lookup(|p| p.scatterer_density);
        let mean = props.lookup(|p| p.scatterer_mean);
        let std = props.lookup(|p| p.scatterer_std);

        let mut amplitudes = Array2::<f32>::zeros((ns * k, nz));
        amplitudes
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(c, mut col)| {
                let labels = map.labels().row(c / k);
                let mut rng = rng::stream(&[rng::DOMAIN_SCATTERER, layer_seed, c as u64]);
                for (out, &l) in col.iter_mut().zip(labels.iter()) {
                    let l = l as usize;
                    let occupied = rng.random::<f64>() < density[l];
                    if occupied {
                        let n: f64 = rng.sample(StandardNormal);
                        *out = (mean[l] + std[l] * n) as f32;
                    }
                }
            });
        ScattererField {
            amplitudes,
            oversampling: k,
        }
    }

    /// Marches one ray down `scanline`.
    ///
    /// With `mu` the attenuation along the scanline and `R_b` the reflection
    /// coefficient at every label change `b` up to and including `z`:
    /// `T[z] = exp(-2 Σ_{i<=z} mu[i]) Π_b (1 - R_b)` and
    /// `echo[z] = T[z] (scatterer[z] + gain R_z)`.
    pub fn march_ray(
        &self,
        map: &TissueMap,
        scanline: usize,
        jitter: f64,
        scatterers: &ScattererField,
    ) -> RayResult {
        let props = map.properties();
        let mu = props.lookup(|p| p.attenuation_mu);
        let impedance = props.lookup(|p| p.impedance);
        let labels = map.labels().row(scanline);
        let column = scatterers.amplitudes.row(scatterers.column(scanline, jitter));
        let gain = self.params.boundary_gain;

        let n = labels.len();
        let mut echo = Vec::with_capacity(n);
        let mut transmission = Vec::with_capacity(n);
        let mut mu_sum = 0.0;
        let mut reflection_loss = 1.0;
        let mut prev: Option<usize> = None;
        for (&l, &scat) in labels.iter().zip(column.iter()) {
            let l = l as usize;
            mu_sum += mu[l];
            let r = match prev {
                Some(p) if p != l => reflection_coefficient(impedance[p], impedance[l]),
                _ => 0.0,
            };
            reflection_loss *= 1.0 - r;
            let t = (-2.0 * mu_sum).exp() * reflection_loss;
            transmission.push(t);
            echo.push(t * (scat as f64 + gain * r));
            prev = Some(l);
        }
        RayResult { echo, transmission }
    }

    /// Averages `rays` stratified, jittered rays over every layer in
    /// `fields`. Ray `r` of scanline `s` sits at
    /// `(r + u) / rays - 0.5` scanline widths, `u ~ U[0,1)` keyed by
    /// `(seed, s, r)`.
    pub fn beamform(
        &self,
        map: &TissueMap,
        fields: &[ScattererField],
        rays: u32,
        seed: u64,
    ) -> Array2<f64> {
        let (ns, nz) = map.geometry().dim();
        let passes = (rays as usize * fields.len()) as f64;
        let mut echo = Array2::<f64>::zeros((ns, nz));
        echo.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(s, mut row)| {
                for r in 0..rays {
                    let u: f64 =
                        rng::stream(&[rng::DOMAIN_JITTER, seed, s as u64, r as u64]).random();
                    let jitter = (r as f64 + u) / rays as f64 - 0.5;
                    for field in fields {
                        let ray = self.march_ray(map, s, jitter, field);
                        for (acc, e) in row.iter_mut().zip(ray.echo) {
                            *acc += e;
                        }
                    }
                }
                row.mapv_inplace(|v| v / passes);
            });
        echo
    }

    /// RF-like image for one pass: `quality.elevational_layers` scatterer
    /// layers and `quality.rays_per_scanline` rays per scanline, averaged,
    /// then convolved with the point-spread function.
    pub fn simulate_rf(&self, map: &TissueMap, quality: SimQuality, seed: u64) -> Result<PolarImage> {
        quality.validate()?;
        let fields: Vec<_> = (0..quality.elevational_layers)
            .map(|l| self.scatterer_field(map, layer_seed(seed, l)))
            .collect();
        let echo = self.beamform(map, &fields, quality.rays_per_scanline, seed);
        let rf = apply_psf(&echo, &self.params.psf);
        PolarImage::new(rf, *map.geometry())
    }

    /// B-mode conversion with this simulator's constants.
    pub fn post_process(&self, rf: &PolarImage, map: &TissueMap) -> Result<PolarImage> {
        post_process(rf, map, &self.params)
    }

    /// Low- and high-quality B-mode images of the same phantom. Both passes
    /// share the seed, hence the layer-0 scatterers and every other
    /// parameter except [`SimQuality`].
    pub fn simulate_pair(&self, map: &TissueMap, seed: u64) -> Result<(PolarImage, PolarImage)> {
        let (lq, hq) = rayon::join(
            || self.simulate_rf(map, self.params.lq, seed),
            || self.simulate_rf(map, self.params.hq, seed),
        );
        Ok((self.post_process(&lq?, map)?, self.post_process(&hq?, map)?))
    }
}
