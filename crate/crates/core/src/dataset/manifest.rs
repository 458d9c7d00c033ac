//! `manifest.json`: the dataset index.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "config_hash": "<hex sha-256 of the generating config>",
//!   "records": [
//!     {
//!       "sample_id": "s000000",
//!       "seed": 1234,
//!       "split": "train",
//!       "files": { "x": "s000000/x.f32", "y": "s000000/y.f32", "s": "s000000/s.f32",
//!                  "a": "s000000/a.f32", "m": "s000000/m.f32" },
//!       "crops": [ { "row": 10, "col": 200, "height": 128, "width": 128 } ]
//!     }
//!   ]
//! }
//! ```
//!
//! File paths are relative to the directory holding the manifest. `crops`
//! lists the fixed evaluation windows of eval records (empty for training
//! records, which are cropped at training time).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{rawfmt, Channel, CropWindow};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Unassigned,
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFiles {
    pub x: PathBuf,
    pub y: PathBuf,
    pub s: PathBuf,
    pub a: PathBuf,
    pub m: PathBuf,
}

impl ChannelFiles {
    /// Standard layout `<sample_id>/<channel>.f32`.
    pub fn for_sample(sample_id: &str) -> Self {
        let p = |c: Channel| PathBuf::from(sample_id).join(c.file_name());
        ChannelFiles {
            x: p(Channel::X),
            y: p(Channel::Y),
            s: p(Channel::S),
            a: p(Channel::A),
            m: p(Channel::M),
        }
    }

    pub fn get(&self, channel: Channel) -> &Path {
        match channel {
            Channel::X => &self.x,
            Channel::Y => &self.y,
            Channel::S => &self.s,
            Channel::A => &self.a,
            Channel::M => &self.m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub sample_id: String,
    pub seed: u64,
    pub split: Split,
    pub files: ChannelFiles,
    #[serde(default)]
    pub crops: Vec<CropWindow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn new(config_hash: impl Into<String>) -> Self {
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            config_hash: config_hash.into(),
            records: Vec::new(),
        }
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn record(&self, sample_id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is always serializable")
    }

    /// Writes `<root>/manifest.json` via a temporary file and rename.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = root.join(MANIFEST_FILE);
        let tmp = root.join(format!(".{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads a manifest from a file or from a directory holding `manifest.json`.
    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| Error::Json { path, source })?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    /// Checks ids are unique and every referenced file exists under `root`.
    /// With `deep`, every file is also decoded and checksum-verified.
    pub fn validate(&self, root: &Path, deep: bool) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.sample_id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id {}", r.sample_id)));
            }
            for c in Channel::ALL {
                let path = root.join(r.files.get(c));
                if !path.is_file() {
                    return Err(Error::MissingFile { path });
                }
                if deep {
                    rawfmt::read_grid(&path)?;
                }
            }
        }
        Ok(())
    }
}
