//! Attenuation integral maps used as conditioning input.
//!
//! For every beam sample the map holds the fraction of unit intensity that
//! reaches it on a one-way path from the probe: `a[s][z] =
//! exp(-Σ_{i=0..z} mu[s][i])`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::TissueMap;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Polar,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMap {
    pub values: Array2<f64>,
    pub coordinates: Coordinates,
    /// Value the map was divided by; `None` before normalization.
    pub reference: Option<f64>,
}

/// Percentile used to normalize attenuation maps.
pub const NORMALIZATION_PERCENTILE: f64 = 98.0;

/// One-way attenuation integral over the beam grid of `map`.
pub fn attenuation_integral(map: &TissueMap) -> AttenuationMap {
    let mut values = map.mu();
    for mut ray in values.axis_iter_mut(Axis(0)) {
        let mut sum = 0.0;
        for v in ray.iter_mut() {
            sum += *v;
            *v = (-sum).exp();
        }
    }
    AttenuationMap {
        values,
        coordinates: Coordinates::Polar,
        reference: None,
    }
}

/// Divides by the map's own 98th percentile and clamps to `[0, 1]`. An
/// all-zero map stays zero with reference 0.
pub fn normalize_98(att: &AttenuationMap) -> Result<AttenuationMap> {
    if att.coordinates != Coordinates::Polar {
        return Err(Error::InvalidArgument(
            "attenuation maps are normalized in polar form".into(),
        ));
    }
    let flat: Vec<f64> = att.values.iter().copied().collect();
    let reference = stats::percentile(&flat, NORMALIZATION_PERCENTILE)
        .ok_or(Error::NonFinite("attenuation map"))?;
    let values = if reference > 0.0 {
        att.values.mapv(|v| (v / reference).clamp(0.0, 1.0))
    } else {
        Array2::zeros(att.values.dim())
    };
    Ok(AttenuationMap {
        values,
        coordinates: Coordinates::Polar,
        reference: Some(reference.max(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::BeamGeometry;
    use crate::phantom::{PropertyTable, TissueProperties};

    fn uniform(mu: f64) -> TissueMap {
        let g = BeamGeometry {
            scanline_count: 3,
            axial_samples: 20,
            ..BeamGeometry::desk()
        };
        let mut t = PropertyTable::new();
        t.insert(
            0,
            "u",
            TissueProperties {
                impedance: 1.5,
                attenuation_mu: mu,
                scatterer_mean: 0.0,
                scatterer_std: 0.0,
                scatterer_density: 0.0,
            },
        )
        .unwrap();
        TissueMap::new(Array2::zeros(g.dim()), t, g, 0).unwrap()
    }

    #[test]
    fn zero_attenuation_is_one() {
        let a = attenuation_integral(&uniform(0.0));
        assert!(a.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_attenuation_closed_form() {
        let a = attenuation_integral(&uniform(0.1));
        // Sum over i = 0..=9 of 0.1.
        let explicit: f64 = (0..=9).map(|_| 0.1).sum();
        assert!((a.values[[1, 9]] - (-explicit).exp()).abs() < 1e-15);
        assert!((a.values[[1, 9]] - 0.36787944117144233).abs() < 1e-12);
        for ray in a.values.axis_iter(Axis(0)) {
            for w in ray.as_slice().unwrap().windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn constant_map_normalizes_to_one() {
        let att = AttenuationMap {
            values: Array2::from_elem((4, 5), 0.37),
            coordinates: Coordinates::Polar,
            reference: None,
        };
        let n = normalize_98(&att).unwrap();
        assert!(n.values.iter().all(|&v| v == 1.0));
        assert_eq!(n.reference, Some(0.37));
    }

    #[test]
    fn ranked_map_reference_and_clamp() {
        let values = Array2::from_shape_fn((10, 10), |(i, j)| 0.01 * (i * 10 + j + 1) as f64);
        let att = AttenuationMap {
            values,
            coordinates: Coordinates::Polar,
            reference: None,
        };
        // Sort-based oracle: h = n * p = 98 -> the 98th order statistic.
        let mut sorted: Vec<f64> = att.values.iter().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = sorted[97];
        let n = normalize_98(&att).unwrap();
        assert_eq!(n.reference, Some(oracle));
        assert!((oracle - 0.98).abs() < 1e-12);
        assert_eq!(n.values[[9, 8]], 1.0);
        assert_eq!(n.values[[9, 9]], 1.0);
        assert!(n.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn all_zero_map() {
        let att = AttenuationMap {
            values: Array2::zeros((3, 3)),
            coordinates: Coordinates::Polar,
            reference: None,
        };
        let n = normalize_98(&att).unwrap();
        assert_eq!(n.reference, Some(0.0));
        assert!(n.values.iter().all(|&v| v == 0.0));
    }
}
