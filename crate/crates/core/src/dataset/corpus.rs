//! Whole-dataset generation: build, store, split and crop-plan a corpus.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Record, Split};
use super::{crop_windows, sample_seed, split, write_preview, write_sample, SampleBuilder};
use crate::error::{Error, Result};
use crate::phantom::PhantomSpec;
use crate::scanconvert::beam_mask_in;

/// Phantom used for each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhantomSource {
    /// A fresh [`PhantomSpec::procedural`] phantom per sample seed.
    Procedural,
    /// The same phantom for every sample; only the speckle differs.
    Fixed { spec: PhantomSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusOptions {
    pub count: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Side of the evaluation crop windows.
    pub patch_size: usize,
    /// Crop windows stored per evaluation record.
    pub eval_crops: usize,
    /// Also write `x.png` and `y.png` next to each sample.
    pub previews: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            count: 200,
            seed: 0,
            train_fraction: 0.9,
            patch_size: 128,
            eval_crops: 4,
            previews: false,
        }
    }
}

impl CorpusOptions {
    /// `round(count * train_fraction)`, capped so at least one record is
    /// left for evaluation.
    pub fn train_count(&self) -> usize {
        let t = (self.count as f64 * self.train_fraction).round() as usize;
        t.min(self.count.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "train fraction {} outside [0, 1]",
                self.train_fraction
            )));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        Ok(())
    }
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:06}")
}

/// Generates `options.count` samples under `root` and writes the manifest.
/// Output is identical for any thread count.
pub fn generate_corpus(
    root: &Path,
    builder: &SampleBuilder,
    phantom: &PhantomSource,
    options: &CorpusOptions,
    config_hash: &str,
) -> Result<DatasetManifest> {
    options.validate()?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let records: Vec<Record> = (0..options.count)
        .into_par_iter()
        .map(|i| {
            let id = sample_id(i);
            let seed = sample_seed(options.seed, i as u64);
            let spec = match phantom {
                PhantomSource::Procedural => PhantomSpec::procedural(seed, &builder.geometry),
                PhantomSource::Fixed { spec } => spec.clone(),
            };
            let tuple = builder.build(id.clone(), &spec, seed)?;
            let files = write_sample(root, &tuple)?;
            if options.previews {
                write_preview(&root.join(&id).join("x.png"), &tuple.x.pixels, 0.0, 255.0)?;
                write_preview(&root.join(&id).join("y.png"), &tuple.y.pixels, 0.0, 255.0)?;
            }
            Ok(Record {
                sample_id: id,
                seed,
                split: Split::Unassigned,
                files,
                crops: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest::new(config_hash);
    manifest.records = records;
    let mut manifest = split(&manifest, options.train_count(), options.seed)?;
    let mask = beam_mask_in(&builder.frame());
    for r in &mut manifest.records {
        if r.split == Split::Eval && options.eval_crops > 0 {
            r.crops = crop_windows(&mask.pixels, options.patch_size, options.eval_crops, r.seed)?;
        }
    }
    manifest.write(root)?;
    Ok(manifest)
}
