//! Built-in feature extractor for the Fréchet distance.

use ndarray::{s, Array2};

use super::frechet::FeatureMatrix;
use crate::error::Result;

/// Per-image feature extractor.
pub trait FeatureExtractor: Sync {
    /// Identifier written into reports next to the distance.
    fn id(&self) -> String;
    fn extract(&self, image: &Array2<f32>, mask: &Array2<u8>) -> Vec<f64>;
}

/// Masked intensity histogram (`bins` bins over [0, 255], normalized) plus
/// the mean gradient magnitude (divided by 255) over in-mask pixels.
/// Out-of-mask pixels are zeroed before differencing.
#[derive(Debug, Clone, Copy)]
pub struct HistogramGradient {
    pub bins: usize,
}

impl Default for HistogramGradient {
    fn default() -> Self {
        HistogramGradient { bins: 64 }
    }
}

impl FeatureExtractor for HistogramGradient {
    fn id(&self) -> String {
        format!("hist{}+grad", self.bins)
    }

    fn extract(&self, image: &Array2<f32>, mask: &Array2<u8>) -> Vec<f64> {
        let (h, w) = image.dim();
        let px = |r: usize, c: usize| {
            if mask[[r, c]] != 0 {
                image[[r, c]] as f64
            } else {
                0.0
            }
        };
        let mut feats = vec![0.0; self.bins + 1];
        let mut n = 0usize;
        let mut grad = 0.0;
        let mut n_grad = 0usize;
        for r in 0..h {
            for c in 0..w {
                if mask[[r, c]] == 0 {
                    continue;
                }
                let v = px(r, c);
                let b = ((v / 255.0 * self.bins as f64).floor() as usize).min(self.bins - 1);
                feats[b] += 1.0;
                n += 1;
                if r + 1 < h && c + 1 < w {
                    let gx = px(r, c + 1) - v;
                    let gy = px(r + 1, c) - v;
                    grad += gx.hypot(gy);
                    n_grad += 1;
                }
            }
        }
        if n > 0 {
            feats[..self.bins].iter_mut().for_each(|f| *f /= n as f64);
        }
        if n_grad > 0 {
            feats[self.bins] = grad / n_grad as f64 / 255.0;
        }
        feats
    }
}

/// Four quadrant pieces of the largest centred square crop with even side.
pub fn center_pieces<T: Clone>(grid: &Array2<T>) -> Vec<Array2<T>> {
    let (h, w) = grid.dim();
    let piece = h.min(w) / 2;
    if piece == 0 {
        return Vec::new();
    }
    let (r0, c0) = ((h - 2 * piece) / 2, (w - 2 * piece) / 2);
    let mut out = Vec::with_capacity(4);
    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let (r, c) = (r0 + dr * piece, c0 + dc * piece);
        out.push(grid.slice(s![r..r + piece, c..c + piece]).to_owned());
    }
    out
}

/// Feature rows for a set of (image, mask) pairs: one row per centre piece.
pub fn feature_rows<'a>(
    extractor: &dyn FeatureExtractor,
    images: impl IntoIterator<Item = (&'a Array2<f32>, &'a Array2<u8>)>,
) -> Result<FeatureMatrix> {
    let mut rows = Vec::new();
    for (img, mask) in images {
        for (piece, m) in center_pieces(img).iter().zip(center_pieces(mask)) {
            rows.push(extractor.extract(piece, &m));
        }
    }
    FeatureMatrix::from_rows(&rows, extractor.id())
}
