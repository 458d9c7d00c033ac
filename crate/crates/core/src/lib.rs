//! Desk-scale ultrasound simulation and evaluation.
//!
//! The pipeline turns a procedural tissue phantom into paired low- and
//! high-quality B-mode images, an attenuation map, a segmentation and a beam
//! mask on a common screen grid, stores them as a dataset, and scores
//! translated images with PSNR, SSIM, patch KL and a Fréchet distance.
//!
//! ```no_run
//! use echosim::{build_sample, BeamGeometry, PhantomSpec};
//!
//! let tuple = build_sample(&PhantomSpec::bone_demo(), &BeamGeometry::desk(), 7)?;
//! assert_eq!(tuple.x.pixels.dim(), (512, 708));
//! # Ok::<(), echosim::Error>(())
//! ```

pub mod acoustics;
pub mod attenmap;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod phantom;
mod rng;
pub mod scanconvert;
pub mod stats;

pub use acoustics::{AcousticParams, BeamGeometry, PolarImage, SimQuality, Simulator};
pub use attenmap::{attenuation_integral, normalize_98, AttenuationMap};
pub use dataset::{build_sample, Channel, CropWindow, DatasetManifest, SampleBuilder, SampleTuple};
pub use error::{Error, FormatError, Result};
pub use phantom::{default_property_table, generate_phantom, PhantomSpec, PropertyTable, TissueMap};
pub use scanconvert::{beam_mask, scan_convert, BeamMask, CartesianFrame, CartesianImage, Interpolation};
