//! Sample assembly, cropping, splitting and on-disk storage.
//!
//! A sample directory `<root>/<sample_id>/` holds the five channels as raw
//! float grids (`x.f32` LQ B-mode, `y.f32` HQ B-mode, `s.f32` segmentation
//! labels, `a.f32` attenuation map, `m.f32` beam mask) and `meta.json` with
//! the sample id, seed and screen frame.

mod corpus;
pub mod manifest;
pub mod rawfmt;

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::{BeamGeometry, Simulator};
use crate::attenmap::{attenuation_integral, normalize_98};
use crate::error::{Error, Result};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::rng;
use crate::scanconvert::{
    beam_mask_in, scan_convert_attenuation, scan_convert_into, scan_convert_labels, BeamMask,
    CartesianFrame, CartesianImage, Interpolation, DEFAULT_OUTPUT_SIZE,
};

pub use corpus::{generate_corpus, sample_id, CorpusOptions, PhantomSource};
pub use manifest::{ChannelFiles, DatasetManifest, Record, Split};

/// Minimum fraction of a crop window that must lie inside the beam mask.
pub const MIN_CROP_COVERAGE: f64 = 0.25;
const CROP_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    X,
    Y,
    S,
    A,
    M,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::X, Channel::Y, Channel::S, Channel::A, Channel::M];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::S => "s",
            Channel::A => "a",
            Channel::M => "m",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.f32", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropWindow {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl CropWindow {
    pub fn apply<T: Clone>(&self, grid: &Array2<T>) -> Array2<T> {
        grid.slice(s![self.row..self.row + self.height, self.col..self.col + self.width])
            .to_owned()
    }
}

/// One dataset record: LQ input `x`, HQ target `y`, segmentation `s`,
/// attenuation map `a` and beam mask `m`, all on the same pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTuple {
    pub sample_id: String,
    pub seed: u64,
    pub x: CartesianImage,
    pub y: CartesianImage,
    pub s: CartesianImage,
    pub a: CartesianImage,
    pub m: BeamMask,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleMeta {
    sample_id: String,
    seed: u64,
    frame: CartesianFrame,
}

impl SampleTuple {
    pub fn frame(&self) -> &CartesianFrame {
        &self.x.frame
    }

    pub fn dim(&self) -> (usize, usize) {
        self.x.pixels.dim()
    }

    pub fn channel(&self, c: Channel) -> Array2<f32> {
        match c {
            Channel::X => self.x.pixels.clone(),
            Channel::Y => self.y.pixels.clone(),
            Channel::S => self.s.pixels.clone(),
            Channel::A => self.a.pixels.clone(),
            Channel::M => self.m.pixels.mapv(|v| v as f32),
        }
    }

    /// Checks shared dimensions and value ranges.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for grid in [&self.y.pixels, &self.s.pixels, &self.a.pixels] {
            if grid.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: grid.dim(),
                });
            }
        }
        if self.m.pixels.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.m.pixels.dim(),
            });
        }
        let in_range = |g: &Array2<f32>, hi: f32| g.iter().all(|v| (0.0..=hi).contains(v));
        if !in_range(&self.x.pixels, 255.0) || !in_range(&self.y.pixels, 255.0) {
            return Err(Error::InvalidArgument("B-mode values outside [0, 255]".into()));
        }
        if !in_range(&self.a.pixels, 1.0) {
            return Err(Error::InvalidArgument("attenuation values outside [0, 1]".into()));
        }
        if self.s.pixels.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(Error::InvalidArgument("segmentation is not integer-valued".into()));
        }
        if self.m.pixels.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask is not binary".into()));
        }
        Ok(())
    }

    /// Applies one window to all five channels.
    pub fn crop(&self, window: &CropWindow, sample_id: String) -> SampleTuple {
        let frame = self
            .frame()
            .crop(window.row, window.col, window.height, window.width);
        let img = |c: &CartesianImage| CartesianImage {
            pixels: window.apply(&c.pixels),
            frame,
        };
        SampleTuple {
            sample_id,
            seed: self.seed,
            x: img(&self.x),
            y: img(&self.y),
            s: img(&self.s),
            a: img(&self.a),
            m: BeamMask {
                pixels: window.apply(&self.m.pixels),
                frame,
            },
        }
    }
}

/// Runs the full per-sample pipeline with fixed simulator and output size.
#[derive(Debug, Clone)]
pub struct SampleBuilder {
    pub simulator: Simulator,
    pub geometry: BeamGeometry,
    pub out_size: (usize, usize),
}

impl SampleBuilder {
    pub fn new(simulator: Simulator, geometry: BeamGeometry, out_size: (usize, usize)) -> Result<Self> {
        CartesianFrame::fit(&geometry, out_size)?;
        Ok(SampleBuilder {
            simulator,
            geometry,
            out_size,
        })
    }

    pub fn frame(&self) -> CartesianFrame {
        CartesianFrame::fit(&self.geometry, self.out_size).expect("validated in new")
    }

    /// Phantom → paired LQ/HQ B-mode → normalized attenuation map → scan
    /// conversion of every channel (nearest for labels, bilinear otherwise)
    /// plus the shared beam mask.
    pub fn build(&self, sample_id: impl Into<String>, spec: &PhantomSpec, seed: u64) -> Result<SampleTuple> {
        let map = generate_phantom(spec, &self.geometry)?;
        let (lq, hq) = self.simulator.simulate_pair(&map, seed)?;
        let att = normalize_98(&attenuation_integral(&map))?;
        let frame = self.frame();
        let a = scan_convert_attenuation(&att, &frame)?;
        let tuple = SampleTuple {
            sample_id: sample_id.into(),
            seed,
            x: scan_convert_into(&lq.samples, &frame, Interpolation::Bilinear)?,
            y: scan_convert_into(&hq.samples, &frame, Interpolation::Bilinear)?,
            s: scan_convert_labels(&map, &frame)?,
            a: CartesianImage {
                pixels: a.values.mapv(|v| v as f32),
                frame,
            },
            m: beam_mask_in(&frame),
        };
        tuple.validate()?;
        Ok(tuple)
    }
}

/// [`SampleBuilder::build`] with default simulator constants and output size.
pub fn build_sample(spec: &PhantomSpec, geometry: &BeamGeometry, seed: u64) -> Result<SampleTuple> {
    SampleBuilder::new(Simulator::default(), *geometry, DEFAULT_OUTPUT_SIZE)?.build(
        format!("seed{seed}"),
        spec,
        seed,
    )
}

/// Seed of the `index`-th sample of a run seeded with `run_seed`.
pub fn sample_seed(run_seed: u64, index: u64) -> u64 {
    rng::mix(&[rng::DOMAIN_SAMPLE, run_seed, index])
}

/// Draws `count` square windows of side `patch_size`, each covering the
/// beam mask by at least [`MIN_CROP_COVERAGE`].
pub fn crop_windows(mask: &Array2<u8>, patch_size: usize, count: usize, seed: u64) -> Result<Vec<CropWindow>> {
    let (h, w) = mask.dim();
    if patch_size == 0 || patch_size > h || patch_size > w {
        return Err(Error::ImageTooSmall {
            required: (patch_size, patch_size),
            found: (h, w),
        });
    }
    // Summed-area table for O(1) coverage queries.
    let mut sat = Array2::<u64>::zeros((h + 1, w + 1));
    for r in 0..h {
        for c in 0..w {
            sat[[r + 1, c + 1]] =
                mask[[r, c]].min(1) as u64 + sat[[r, c + 1]] + sat[[r + 1, c]] - sat[[r, c]];
        }
    }
    let covered = |r: usize, c: usize| {
        let (r1, c1) = (r + patch_size, c + patch_size);
        sat[[r1, c1]] + sat[[r, c]] - sat[[r, c1]] - sat[[r1, c]]
    };
    let needed = (MIN_CROP_COVERAGE * (patch_size * patch_size) as f64).ceil() as u64;

    let mut rng = rng::stream(&[rng::DOMAIN_CROP, seed]);
    let mut windows = Vec::with_capacity(count);
    for _ in 0..count {
        let found = (0..CROP_ATTEMPTS).find_map(|_| {
            let r = rng.random_range(0..=h - patch_size);
            let c = rng.random_range(0..=w - patch_size);
            (covered(r, c) >= needed).then_some((r, c))
        });
        let (row, col) = found.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no {patch_size}x{patch_size} window covers {MIN_CROP_COVERAGE} of the beam mask"
            ))
        })?;
        windows.push(CropWindow {
            row,
            col,
            height: patch_size,
            width: patch_size,
        });
    }
    Ok(windows)
}

/// Crops `count` aligned patch tuples out of `tuple`.
pub fn crop_patches(tuple: &SampleTuple, patch_size: usize, count: usize, seed: u64) -> Result<Vec<SampleTuple>> {
    let windows = crop_windows(&tuple.m.pixels, patch_size, count, seed)?;
    Ok(windows
        .iter()
        .enumerate()
        .map(|(k, w)| tuple.crop(w, format!("{}_c{k}", tuple.sample_id)))
        .collect())
}

/// Deterministic shuffled partition: `train_count` records become training
/// records, the rest evaluation records. Record order is preserved.
pub fn split(manifest: &DatasetManifest, train_count: usize, seed: u64) -> Result<DatasetManifest> {
    let n = manifest.records.len();
    if train_count > 0 && train_count >= n {
        return Err(Error::InvalidArgument(format!(
            "train count {train_count} must be smaller than the record count {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(&[rng::DOMAIN_SPLIT, seed]));
    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = Split::Eval;
    }
    for &i in &order[..train_count] {
        out.records[i].split = Split::Train;
    }
    Ok(out)
}

/// Writes the tuple under `<root>/<sample_id>/` and returns its channel files
/// relative to `root`.
pub fn write_sample(root: &Path, tuple: &SampleTuple) -> Result<ChannelFiles> {
    tuple.validate()?;
    let dir = root.join(&tuple.sample_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let files = ChannelFiles::for_sample(&tuple.sample_id);
    for c in Channel::ALL {
        rawfmt::write_grid(&root.join(files.get(c)), &tuple.channel(c))?;
    }
    let meta = SampleMeta {
        sample_id: tuple.sample_id.clone(),
        seed: tuple.seed,
        frame: *tuple.frame(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("serializable");
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(files)
}

/// Reads back a tuple written by [`write_sample`].
pub fn read_sample(root: &Path, sample_id: &str) -> Result<SampleTuple> {
    let dir = root.join(sample_id);
    let meta_path = dir.join("meta.json");
    let text = match std::fs::read_to_string(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile { path: meta_path })
        }
        Err(e) => return Err(Error::io(&meta_path, e)),
    };
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    read_sample_files(root, &ChannelFiles::for_sample(sample_id), meta.sample_id, meta.seed, meta.frame)
}

pub(crate) fn read_sample_files(
    root: &Path,
    files: &ChannelFiles,
    sample_id: String,
    seed: u64,
    frame: CartesianFrame,
) -> Result<SampleTuple> {
    let load = |c: Channel| -> Result<Array2<f32>> {
        let grid = rawfmt::read_grid(&root.join(files.get(c)))?;
        if grid.dim() != frame.dim() {
            return Err(Error::DimensionMismatch {
                expected: frame.dim(),
                found: grid.dim(),
            });
        }
        Ok(grid)
    };
    let img = |c: Channel| -> Result<CartesianImage> {
        Ok(CartesianImage {
            pixels: load(c)?,
            frame,
        })
    };
    let mask = load(Channel::M)?;
    if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("{sample_id}: mask is not binary")));
    }
    let tuple = SampleTuple {
        x: img(Channel::X)?,
        y: img(Channel::Y)?,
        s: img(Channel::S)?,
        a: img(Channel::A)?,
        m: BeamMask {
            pixels: mask.mapv(|v| v as u8),
            frame,
        },
        sample_id,
        seed,
    };
    Ok(tuple)
}

/// Reads one channel of a manifest record.
pub fn read_channel(root: &Path, record: &Record, channel: Channel) -> Result<Array2<f32>> {
    rawfmt::read_grid(&root.join(record.files.get(channel)))
}

/// Saves a grid as 8-bit grayscale PNG, mapping `[lo, hi]` to `[0, 255]`.
pub fn write_preview(path: &Path, grid: &Array2<f32>, lo: f32, hi: f32) -> Result<()> {
    let (h, w) = grid.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes: Vec<u8> = grid
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer sized to image");
    img.save(path)?;
    Ok(())
}

/// Absolute path of a record's channel.
pub fn channel_path(root: &Path, record: &Record, channel: Channel) -> PathBuf {
    root.join(record.files.get(channel))
}
