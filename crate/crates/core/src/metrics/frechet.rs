use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::dataset::rawfmt;
use crate::error::{Error, Result};

/// Ridge added to both covariances when there are no more samples than
/// feature dimensions.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Feature vectors, one row per sample, tagged with the extractor that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    pub source: String,
}

impl FeatureMatrix {
    pub fn new(rows: Array2<f64>, source: impl Into<String>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(FeatureMatrix {
            rows,
            source: source.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked");
        Self::new(arr, source)
    }

    /// Reads a raw float grid file (rows = samples).
    pub fn read(path: &Path, source: impl Into<String>) -> Result<Self> {
        let grid = rawfmt::read_grid(path)?;
        Self::new(grid.mapv(|v| v as f64), source)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        rawfmt::write_grid(path, &self.rows.mapv(|v| v as f32))
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn samples(&self) -> usize {
        self.rows.nrows()
    }

    /// Mean vector and unbiased covariance, accumulated in row order.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (n, d) = self.rows.dim();
        let mut mean = DVector::zeros(d);
        for row in self.rows.rows() {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean /= n.max(1) as f64;
        let mut cov = DMatrix::zeros(d, d);
        for row in self.rows.rows() {
            let centred = DVector::from_iterator(d, row.iter().zip(mean.iter()).map(|(v, m)| v - m));
            cov += &centred * centred.transpose();
        }
        cov /= (n.max(2) - 1) as f64;
        (mean, cov)
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians with the given moments:
/// `|m1 - m2|² + tr(S1 + S2 - 2 (S1 S2)^½)`, where the trace of the root is
/// taken from the eigenvalues of `S1^½ S2 S1^½` with negatives clamped to 0.
/// The result is clamped at 0.
pub fn frechet_from_moments(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> f64 {
    let diff = m1 - m2;
    let r1 = psd_sqrt(s1);
    let inner = &r1 * s2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_root: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    (diff.norm_squared() + s1.trace() + s2.trace() - 2.0 * tr_root).max(0.0)
}

/// Fréchet distance between Gaussians fitted to two feature sets.
pub fn frechet_distance(f1: &FeatureMatrix, f2: &FeatureMatrix) -> Result<f64> {
    if f1.dim() != f2.dim() {
        return Err(Error::DimensionMismatch {
            expected: (f1.samples(), f1.dim()),
            found: (f2.samples(), f2.dim()),
        });
    }
    if f1.samples() == 0 || f2.samples() == 0 {
        return Err(Error::InvalidArgument("empty feature matrix".into()));
    }
    if f1.rows.iter().chain(f2.rows.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    let (m1, mut s1) = f1.moments();
    let (m2, mut s2) = f2.moments();
    let d = f1.dim();
    if f1.samples() <= d || f2.samples() <= d {
        let ridge = DMatrix::<f64>::identity(d, d) * COVARIANCE_RIDGE;
        s1 += &ridge;
        s2 += &ridge;
    }
    Ok(frechet_from_moments(&m1, &s1, &m2, &s2))
}
