//! Dataset-level evaluation and the report it produces.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{feature_rows, FeatureExtractor, HistogramGradient};
use super::frechet::{frechet_distance, FeatureMatrix};
use super::pkl::{pkl_masked, BINS, PATCH};
use super::psnr::{psnr_masked, PsnrMode};
use super::ssim::ssim_masked;
use crate::dataset::manifest::{DatasetManifest, Record, Split};
use crate::dataset::{rawfmt, read_channel, Channel, CropWindow};
use crate::error::{Error, Result};
use crate::stats;

/// Lower-tail percentile reported for PSNR and SSIM.
pub const LOW_PERCENTILE: f64 = 5.0;
/// Upper-tail percentile reported for pKL.
pub const HIGH_PERCENTILE: f64 = 95.0;

static DEFAULT_EXTRACTOR: HistogramGradient = HistogramGradient { bins: 64 };

/// Where predicted images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSource {
    /// `<dir>/<sample_id>.f32` in the raw grid format.
    Dir(PathBuf),
    /// A channel of the dataset itself; `X` is the identity baseline and
    /// `Y` scores the targets against themselves.
    Channel(Channel),
}

impl PredictionSource {
    fn load(&self, root: &Path, record: &Record) -> Result<Array2<f32>> {
        match self {
            PredictionSource::Dir(dir) => {
                let path = dir.join(format!("{}.f32", record.sample_id));
                rawfmt::read_grid(&path).map_err(|e| match e {
                    Error::MissingFile { .. } => Error::MissingPrediction {
                        sample_id: record.sample_id.clone(),
                    },
                    e => e,
                })
            }
            PredictionSource::Channel(c) => read_channel(root, record, *c),
        }
    }
}

pub struct EvalOptions<'a> {
    pub label: String,
    pub psnr_mode: PsnrMode,
    pub extractor: &'a dyn FeatureExtractor,
    /// Precomputed (prediction, target) features; replaces the extractor.
    pub external_features: Option<(&'a FeatureMatrix, &'a FeatureMatrix)>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        EvalOptions {
            label: "prediction".into(),
            psnr_mode: PsnrMode::default(),
            extractor: &DEFAULT_EXTRACTOR,
            external_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairMetrics {
    pub sample_id: String,
    pub crop: Option<CropWindow>,
    #[serde(with = "nonfinite")]
    pub psnr: f64,
    #[serde(with = "nonfinite")]
    pub ssim: f64,
    #[serde(with = "nonfinite")]
    pub pkl: f64,
}

/// Mean and one tail percentile of a per-pair metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    #[serde(with = "nonfinite")]
    pub mean: f64,
    #[serde(with = "nonfinite")]
    pub percentile: f64,
    pub percentile_rank: f64,
}

impl Summary {
    pub fn of(values: &[f64], rank: f64) -> Result<Self> {
        let mean = stats::mean(values).ok_or_else(|| Error::InvalidArgument("no metric values".into()))?;
        let percentile = stats::percentile(values, rank).ok_or(Error::NonFinite("metric values"))?;
        Ok(Summary {
            mean,
            percentile,
            percentile_rank: rank,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub label: String,
    pub psnr_mode: PsnrMode,
    pub psnr: Summary,
    pub ssim: Summary,
    pub pkl: Summary,
    #[serde(with = "nonfinite")]
    pub fid: f64,
    pub fid_extractor: String,
    pub pairs: Vec<PairMetrics>,
}

impl MetricsReport {
    pub fn from_pairs(
        label: impl Into<String>,
        psnr_mode: PsnrMode,
        pairs: Vec<PairMetrics>,
        fid: f64,
        fid_extractor: impl Into<String>,
    ) -> Result<Self> {
        let col = |f: fn(&PairMetrics) -> f64| pairs.iter().map(f).collect::<Vec<_>>();
        Ok(MetricsReport {
            label: label.into(),
            psnr_mode,
            psnr: Summary::of(&col(|p| p.psnr), LOW_PERCENTILE)?,
            ssim: Summary::of(&col(|p| p.ssim), LOW_PERCENTILE)?,
            pkl: Summary::of(&col(|p| p.pkl), HIGH_PERCENTILE)?,
            fid,
            fid_extractor: fid_extractor.into(),
            pairs,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Table cells in display order: PSNR mean/%ile, SSIM [%] mean/%ile,
    /// pKL ×10² mean/%ile, FID.
    pub fn table_values(&self) -> [f64; 7] {
        [
            self.psnr.mean,
            self.psnr.percentile,
            100.0 * self.ssim.mean,
            100.0 * self.ssim.percentile,
            100.0 * self.pkl.mean,
            100.0 * self.pkl.percentile,
            self.fid,
        ]
    }
}

/// Formats a value to 4 decimals; infinities print as `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        nonfinite::name(v).to_string()
    }
}

/// Aligned plain-text table with one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let header = [
        "PSNR", "PSNR %ile", "SSIM[%]", "SSIM %ile", "pKLx100", "pKL %ile", "FID",
    ];
    let name_w = reports
        .iter()
        .map(|r| r.label.len())
        .chain(["method".len()])
        .max()
        .unwrap_or(6);
    let cells: Vec<Vec<String>> = reports
        .iter()
        .map(|r| r.table_values().iter().map(|&v| format_value(v)).collect())
        .collect();
    let col_w: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|row| row[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "method");
    for (h, w) in header.iter().zip(&col_w) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (r, row) in reports.iter().zip(&cells) {
        let _ = write!(out, "{:<name_w$}", r.label);
        for (c, w) in row.iter().zip(&col_w) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(
            out,
            "%ile: {}th for PSNR and SSIM, {}th for pKL; FID features: {}",
            LOW_PERCENTILE, HIGH_PERCENTILE, r.fid_extractor
        );
    }
    out
}

struct RecordResult {
    pairs: Vec<PairMetrics>,
    pred_features: Vec<Vec<f64>>,
    target_features: Vec<Vec<f64>>,
}

fn evaluate_record(
    root: &Path,
    record: &Record,
    source: &PredictionSource,
    options: &EvalOptions,
) -> Result<RecordResult> {
    let pred = source.load(root, record)?;
    let target = read_channel(root, record, Channel::Y)?;
    let mask = read_channel(root, record, Channel::M)?.mapv(|v| (v != 0.0) as u8);
    if pred.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: pred.dim(),
        });
    }

    let windows: Vec<Option<CropWindow>> = if record.crops.is_empty() {
        vec![None]
    } else {
        record.crops.iter().copied().map(Some).collect()
    };
    let mut pairs = Vec::with_capacity(windows.len());
    for w in windows {
        let (p, t, m) = match w {
            Some(w) => (w.apply(&pred), w.apply(&target), w.apply(&mask)),
            None => (pred.clone(), target.clone(), mask.clone()),
        };
        pairs.push(PairMetrics {
            sample_id: record.sample_id.clone(),
            crop: w,
            psnr: psnr_masked(&p, &t, Some(&m), options.psnr_mode)?,
            ssim: ssim_masked(&p, &t, Some(&m))?,
            pkl: pkl_masked(&p, &t, Some(&m), PATCH, BINS)?,
        });
    }

    let (pred_features, target_features) = if options.external_features.is_some() {
        (Vec::new(), Vec::new())
    } else {
        let rows = |img: &Array2<f32>| feature_rows(options.extractor, [(img, &mask)]).map(|f| rows_of(&f));
        (rows(&pred)?, rows(&target)?)
    };
    Ok(RecordResult {
        pairs,
        pred_features,
        target_features,
    })
}

fn rows_of(f: &FeatureMatrix) -> Vec<Vec<f64>> {
    f.rows.outer_iter().map(|r| r.to_vec()).collect()
}

/// Scores predictions for every eval record of `manifest` against the HQ
/// targets. Per-pair metrics are masked to the beam and computed on each
/// stored crop window (the whole image when a record has none). FID
/// compares prediction and target features over the full images.
pub fn evaluate(
    manifest: &DatasetManifest,
    root: &Path,
    source: &PredictionSource,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let records: Vec<&Record> = manifest.records_in(Split::Eval).collect();
    if records.is_empty() {
        return Err(Error::InvalidArgument("manifest has no eval records".into()));
    }
    let results: Vec<RecordResult> = records
        .par_iter()
        .map(|r| evaluate_record(root, r, source, options))
        .collect::<Result<_>>()?;

    let (fid, extractor_id) = match options.external_features {
        Some((pred, target)) => (frechet_distance(pred, target)?, pred.source.clone()),
        None => {
            let gather = |f: fn(&RecordResult) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                results.iter().flat_map(|r| f(r).iter().cloned()).collect()
            };
            let id = options.extractor.id();
            let pred = FeatureMatrix::from_rows(&gather(|r| &r.pred_features), id.clone())?;
            let target = FeatureMatrix::from_rows(&gather(|r| &r.target_features), id.clone())?;
            (frechet_distance(&pred, &target)?, id)
        }
    };
    let pairs = results.into_iter().flat_map(|r| r.pairs).collect();
    MetricsReport::from_pairs(options.label.clone(), options.psnr_mode, pairs, fid, extractor_id)
}

/// JSON encoding of `f64` that keeps infinities and NaN as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub(crate) mod nonfinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn name(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(name(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, psnr: f64, ssim: f64, pkl: f64) -> PairMetrics {
        PairMetrics {
            sample_id: id.into(),
            crop: None,
            psnr,
            ssim,
            pkl,
        }
    }

    #[test]
    fn infinite_psnr_survives_json() {
        let r = MetricsReport::from_pairs(
            "t",
            PsnrMode::Paper,
            vec![pair("a", f64::INFINITY, 1.0, 0.0), pair("b", f64::INFINITY, 1.0, 0.0)],
            0.0,
            "x",
        )
        .unwrap();
        let json = r.to_json();
        assert!(json.contains("\"inf\""));
        assert_eq!(MetricsReport::from_json(&json).unwrap(), r);
    }

    #[test]
    fn tails_follow_caption_convention() {
        let pairs: Vec<_> = (1..=100)
            .map(|i| pair("s", i as f64, i as f64 / 100.0, i as f64))
            .collect();
        let r = MetricsReport::from_pairs("t", PsnrMode::Paper, pairs, 1.0, "x").unwrap();
        assert_eq!(r.psnr.percentile, 5.0);
        assert_eq!(r.psnr.percentile_rank, 5.0);
        assert_eq!(r.pkl.percentile, 95.0);
        assert_eq!(r.psnr.mean, 50.5);
    }

    #[test]
    fn table_matches_values() {
        let r = MetricsReport::from_pairs(
            "baseline",
            PsnrMode::Paper,
            vec![pair("a", 12.345678, 0.5, 0.25), pair("b", 10.0, 0.7, 0.5)],
            3.25,
            "x",
        )
        .unwrap();
        let t = render_table(std::slice::from_ref(&r));
        let row = t.lines().nth(1).unwrap();
        let cells: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cells[0], "baseline");
        for (cell, v) in cells[1..].iter().zip(r.table_values()) {
            assert_eq!(*cell, format!("{v:.4}"));
        }
    }
}
