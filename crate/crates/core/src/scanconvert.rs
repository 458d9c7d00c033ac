//! Polar → Cartesian scan conversion for a convex probe.
//!
//! Screen coordinates are centimetres with the virtual apex at the origin,
//! x to the right and y pointing down into the body. The sector covers
//! radii `apex .. apex + depth` and angles `±fov/2` from the y axis. The
//! sector's bounding box is fitted into the output image with square
//! pixels, centred.
//!
//! Conversion is by inverse mapping: every output pixel centre is mapped to
//! fractional (scanline, sample) coordinates and interpolated there. The
//! in-sector predicate [`CartesianFrame::to_polar`] is shared with
//! [`beam_mask`], so the mask is exactly the set of pixels that receive data.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{BeamGeometry, PolarImage};
use crate::attenmap::{AttenuationMap, Coordinates};
use crate::error::{Error, Result};
use crate::phantom::TissueMap;

/// Default output size (height, width).
pub const DEFAULT_OUTPUT_SIZE: (usize, usize) = (512, 708);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Placement of a pixel grid in screen space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartesianFrame {
    pub geometry: BeamGeometry,
    pub height: usize,
    pub width: usize,
    /// Pixel pitch in cm.
    pub pitch_cm: f64,
    /// Screen position of the top-left corner of pixel (0, 0).
    pub x0_cm: f64,
    pub y0_cm: f64,
}

impl CartesianFrame {
    /// Fits the full sector into a `height × width` image.
    pub fn fit(geometry: &BeamGeometry, (height, width): (usize, usize)) -> Result<Self> {
        geometry.validate()?;
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "output size must be positive, got {height}x{width}"
            )));
        }
        let half = (geometry.fov_deg / 2.0).to_radians();
        let outer = geometry.apex_cm + geometry.depth_cm;
        let half_width = outer * half.sin();
        let top = geometry.apex_cm * half.cos();
        let extent_y = outer - top;
        let pitch = (2.0 * half_width / width as f64).max(extent_y / height as f64);
        Ok(CartesianFrame {
            geometry: *geometry,
            height,
            width,
            pitch_cm: pitch,
            x0_cm: -(width as f64) * pitch / 2.0,
            y0_cm: top - (height as f64 * pitch - extent_y) / 2.0,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Screen position of pixel `(row, col)`'s centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x0_cm + (col as f64 + 0.5) * self.pitch_cm,
            self.y0_cm + (row as f64 + 0.5) * self.pitch_cm,
        )
    }

    /// Fractional (scanline, sample) coordinates of a pixel centre, or `None`
    /// outside the sector. Sample centres sit at integer coordinates, so
    /// in-sector values range over `[-0.5, n - 0.5]`.
    pub fn to_polar(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let g = &self.geometry;
        let (x, y) = self.pixel_center(row, col);
        let angle = x.atan2(y).to_degrees();
        let depth = x.hypot(y) - g.apex_cm;
        let half = g.fov_deg / 2.0;
        if angle.abs() > half || depth < 0.0 || depth > g.depth_cm {
            return None;
        }
        let s = (angle + half) / g.fov_deg * g.scanline_count as f64 - 0.5;
        let z = depth / g.depth_cm * g.axial_samples as f64 - 0.5;
        Some((s, z))
    }

    /// Sub-window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Self {
        CartesianFrame {
            height,
            width,
            x0_cm: self.x0_cm + col as f64 * self.pitch_cm,
            y0_cm: self.y0_cm + row as f64 * self.pitch_cm,
            ..*self
        }
    }
}

/// Scalar image in screen space; zero outside the sector.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianImage {
    pub pixels: Array2<f32>,
    pub frame: CartesianFrame,
}

/// Binary imaging-region mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamMask {
    pub pixels: Array2<u8>,
    pub frame: CartesianFrame,
}

impl BeamMask {
    pub fn area(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0).count()
    }

    pub fn as_image(&self) -> CartesianImage {
        CartesianImage {
            pixels: self.pixels.mapv(|v| v as f32),
            frame: self.frame,
        }
    }
}

fn sample(grid: &Array2<f64>, s: f64, z: f64, interpolation: Interpolation) -> f64 {
    let (ns, nz) = grid.dim();
    let s = s.clamp(0.0, (ns - 1) as f64);
    let z = z.clamp(0.0, (nz - 1) as f64);
    match interpolation {
        Interpolation::Nearest => grid[[s.round() as usize, z.round() as usize]],
        Interpolation::Bilinear => {
            let (s0, z0) = (s.floor() as usize, z.floor() as usize);
            let (s1, z1) = ((s0 + 1).min(ns - 1), (z0 + 1).min(nz - 1));
            let (ts, tz) = (s - s0 as f64, z - z0 as f64);
            let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
            let near = lerp(grid[[s0, z0]], grid[[s1, z0]], ts);
            let far = lerp(grid[[s0, z1]], grid[[s1, z1]], ts);
            lerp(near, far, tz)
        }
    }
}

/// Resamples a beam-grid array into `frame`, leaving out-of-sector pixels 0.
pub fn resample(grid: &Array2<f64>, frame: &CartesianFrame, interpolation: Interpolation) -> Result<Array2<f64>> {
    let expected = frame.geometry.dim();
    if grid.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: grid.dim(),
        });
    }
    let mut out = Array2::<f64>::zeros(frame.dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(row, mut line)| {
            for (col, px) in line.iter_mut().enumerate() {
                if let Some((s, z)) = frame.to_polar(row, col) {
                    *px = sample(grid, s, z, interpolation);
                }
            }
        });
    Ok(out)
}

/// Scan-converts a polar image into an `out_size` (height, width) image.
pub fn scan_convert(img: &PolarImage, out_size: (usize, usize), interpolation: Interpolation) -> Result<CartesianImage> {
    let frame = CartesianFrame::fit(&img.geometry, out_size)?;
    scan_convert_into(&img.samples, &frame, interpolation)
}

pub fn scan_convert_into(grid: &Array2<f64>, frame: &CartesianFrame, interpolation: Interpolation) -> Result<CartesianImage> {
    let pixels = resample(grid, frame, interpolation)?.mapv(|v| v as f32);
    Ok(CartesianImage {
        pixels,
        frame: *frame,
    })
}

/// Segmentation map: the label grid, nearest-neighbour converted.
pub fn scan_convert_labels(map: &TissueMap, frame: &CartesianFrame) -> Result<CartesianImage> {
    let grid = map.labels().mapv(|l| l as f64);
    scan_convert_into(&grid, frame, Interpolation::Nearest)
}

/// Bilinear conversion of a polar attenuation map.
pub fn scan_convert_attenuation(att: &AttenuationMap, frame: &CartesianFrame) -> Result<AttenuationMap> {
    if att.coordinates != Coordinates::Polar {
        return Err(Error::InvalidArgument("attenuation map is already Cartesian".into()));
    }
    Ok(AttenuationMap {
        values: resample(&att.values, frame, Interpolation::Bilinear)?,
        coordinates: Coordinates::Cartesian,
        reference: att.reference,
    })
}

/// Beam mask for `geometry` at `out_size` (height, width).
pub fn beam_mask(geometry: &BeamGeometry, out_size: (usize, usize)) -> Result<BeamMask> {
    let frame = CartesianFrame::fit(geometry, out_size)?;
    Ok(beam_mask_in(&frame))
}

pub fn beam_mask_in(frame: &CartesianFrame) -> BeamMask {
    let pixels = Array2::from_shape_fn(frame.dim(), |(r, c)| frame.to_polar(r, c).is_some() as u8);
    BeamMask {
        pixels,
        frame: *frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> BeamGeometry {
        BeamGeometry {
            scanline_count: 32,
            axial_samples: 64,
            ..BeamGeometry::desk()
        }
    }

    #[test]
    fn constant_image_is_preserved_in_sector() {
        let g = geometry();
        let img = PolarImage::new(Array2::from_elem(g.dim(), 3.25), g).unwrap();
        let out = scan_convert(&img, (96, 132), Interpolation::Bilinear).unwrap();
        let mask = beam_mask(&g, (96, 132)).unwrap();
        for (&v, &m) in out.pixels.iter().zip(mask.pixels.iter()) {
            assert_eq!(v, if m == 1 { 3.25 } else { 0.0 });
        }
    }

    #[test]
    fn mask_matches_support_of_ones() {
        let g = geometry();
        let ones = PolarImage::new(Array2::ones(g.dim()), g).unwrap();
        for size in [(64, 64), (100, 140), (37, 211)] {
            let conv = scan_convert(&ones, size, Interpolation::Bilinear).unwrap();
            let mask = beam_mask(&g, size).unwrap();
            let support = conv.pixels.mapv(|v| (v > 0.0) as u8);
            assert_eq!(support, mask.pixels);
        }
    }

    #[test]
    fn mask_area_bounds() {
        let g = BeamGeometry::desk();
        for size in [(64, 64), (512, 708), (200, 100)] {
            let area = beam_mask(&g, size).unwrap().area();
            assert!(area > 0 && area < size.0 * size.1);
        }
        let thin = BeamGeometry {
            fov_deg: 1.0,
            ..BeamGeometry::desk()
        };
        let m = beam_mask(&thin, (256, 256)).unwrap();
        assert!(m.area() > 0);
        assert!((m.area() as f64) < 0.05 * 256.0 * 256.0);
    }

    #[test]
    fn nearest_invents_no_labels() {
        let g = geometry();
        let grid = Array2::from_shape_fn(g.dim(), |(s, z)| ((s / 5 + z / 9) % 4 * 3) as f64);
        let frame = CartesianFrame::fit(&g, (120, 160)).unwrap();
        let out = scan_convert_into(&grid, &frame, Interpolation::Nearest).unwrap();
        let mask = beam_mask_in(&frame);
        for (&v, &m) in out.pixels.iter().zip(mask.pixels.iter()) {
            if m == 1 {
                assert!([0.0, 3.0, 6.0, 9.0].contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn bilinear_stays_within_input_range() {
        let g = geometry();
        let grid = Array2::from_shape_fn(g.dim(), |(s, z)| ((s * 7 + z * 13) % 17) as f64 - 4.0);
        let frame = CartesianFrame::fit(&g, (90, 120)).unwrap();
        let out = resample(&grid, &frame, Interpolation::Bilinear).unwrap();
        let mask = beam_mask_in(&frame);
        for (&v, &m) in out.iter().zip(mask.pixels.iter()) {
            if m == 1 {
                assert!((-4.0..=12.0).contains(&v));
            }
        }
    }

    #[test]
    fn single_sample_support_is_its_stencil() {
        let g = geometry();
        let (s0, z0) = (13usize, 40usize);
        let mut grid = Array2::zeros(g.dim());
        grid[[s0, z0]] = 1.0;
        let frame = CartesianFrame::fit(&g, (200, 280)).unwrap();
        let out = resample(&grid, &frame, Interpolation::Bilinear).unwrap();

        // Forward-mapping oracle: recompute every pixel's beam coordinates
        // from scratch and check the bilinear footprint.
        let half = g.fov_deg / 2.0;
        let mut support = 0;
        for r in 0..frame.height {
            for c in 0..frame.width {
                let x = frame.x0_cm + (c as f64 + 0.5) * frame.pitch_cm;
                let y = frame.y0_cm + (r as f64 + 0.5) * frame.pitch_cm;
                let theta = x.atan2(y).to_degrees();
                let depth = (x * x + y * y).sqrt() - g.apex_cm;
                let inside = theta.abs() <= half && (0.0..=g.depth_cm).contains(&depth);
                let fs = (theta + half) / g.scanline_step_deg() - 0.5;
                let fz = depth / g.axial_step_cm() - 0.5;
                let in_stencil = inside && (fs - s0 as f64).abs() < 1.0 && (fz - z0 as f64).abs() < 1.0;
                if out[[r, c]] != 0.0 {
                    support += 1;
                    assert!(in_stencil, "pixel ({r},{c}) outside stencil");
                } else {
                    assert!(!in_stencil, "pixel ({r},{c}) inside stencil but empty");
                }
            }
        }
        assert!(support > 0);
    }

    #[test]
    fn crop_frame_maps_consistently() {
        let frame = CartesianFrame::fit(&geometry(), (100, 140)).unwrap();
        let sub = frame.crop(10, 20, 30, 40);
        for r in 0..30 {
            for c in 0..40 {
                let (a, b) = (sub.to_polar(r, c), frame.to_polar(r + 10, c + 20));
                match (a, b) {
                    (Some(a), Some(b)) => {
                        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9)
                    }
                    (None, None) => {}
                    _ => panic!("sector membership differs at ({r},{c})"),
                }
            }
        }
    }
}
