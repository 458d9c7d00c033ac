//! Run configuration for `echosim generate`.
//!
//! ```toml
//! output_size = [512, 708]
//!
//! [geometry]
//! scanline_count = 128
//! axial_samples = 512
//! fov_deg = 70.0
//! depth_cm = 15.0
//! apex_cm = 5.0
//! frequency_mhz = 8.0
//!
//! [dataset]
//! count = 200
//! seed = 0
//! train_fraction = 0.9
//! patch_size = 128
//! eval_crops = 4
//! previews = false
//!
//! [phantom]
//! kind = "procedural"          # or: kind = "file", path = "bone_phantom.toml"
//!
//! [acoustics]                  # optional; every key defaults
//! boundary_gain = 50.0
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use echosim::acoustics::AcousticParams;
use echosim::dataset::{CorpusOptions, PhantomSource};
use echosim::scanconvert::DEFAULT_OUTPUT_SIZE;
use echosim::{BeamGeometry, PhantomSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PhantomChoice {
    Procedural,
    /// Phantom TOML; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: BeamGeometry,
    #[serde(default)]
    pub acoustics: AcousticParams,
    pub output_size: (usize, usize),
    pub dataset: CorpusOptions,
    pub phantom: PhantomChoice,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        RunConfig {
            geometry: match preset {
                Preset::Desk => BeamGeometry::desk(),
                Preset::Paper => BeamGeometry::paper(),
            },
            acoustics: AcousticParams::default(),
            output_size: DEFAULT_OUTPUT_SIZE,
            dataset: CorpusOptions::default(),
            phantom: PhantomChoice::Procedural,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config is always representable")
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")).into())
    }

    /// Lays the keys of `overrides` (a TOML document) over this config.
    /// Nested tables merge key by key; unknown keys are rejected.
    pub fn overlay(&self, overrides: &str) -> anyhow::Result<Self> {
        let over: toml::Table =
            toml::from_str(overrides).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        let mut base = toml::Table::try_from(self).expect("run config is a table");
        merge(&mut base, over);
        Self::from_toml(&toml::to_string(&base).expect("merged table serializes"))
    }

    pub fn load_over(&self, path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = self.overlay(&text).with_context(|| format!("in {}", path.display()))?;
        if let PhantomChoice::File { path: p } = &mut cfg.phantom {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.geometry.validate()?;
        self.acoustics.validate()?;
        self.dataset.validate()?;
        let (h, w) = self.output_size;
        if h == 0 || w == 0 {
            bail!(UsageError("output size must be positive".into()));
        }
        if self.dataset.patch_size > h.min(w) {
            bail!(UsageError(format!(
                "patch size {} exceeds the output size {h}x{w}",
                self.dataset.patch_size
            )));
        }
        Ok(())
    }

    pub fn phantom_source(&self) -> anyhow::Result<PhantomSource> {
        Ok(match &self.phantom {
            PhantomChoice::Procedural => PhantomSource::Procedural,
            PhantomChoice::File { path } => PhantomSource::Fixed {
                spec: PhantomSpec::load(path).map_err(|e| UsageError(e.to_string()))?,
            },
        })
    }

    /// Hex SHA-256 over the canonical config and the resolved phantom, so
    /// the hash does not depend on where the phantom file lives.
    pub fn hash(&self, phantom: &PhantomSource) -> String {
        let mut canonical = self.clone();
        if let PhantomChoice::File { path } = &mut canonical.phantom {
            *path = PathBuf::new();
        }
        let mut h = Sha256::new();
        h.update(canonical.to_toml().as_bytes());
        if let PhantomSource::Fixed { spec } = phantom {
            h.update(spec.to_toml_string().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            // A table naming its own `kind` replaces the old one wholesale so
            // fields of the previous variant do not linger.
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
