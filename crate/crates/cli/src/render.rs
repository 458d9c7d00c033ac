use anyhow::Context;
use echosim::dataset::{read_channel, DatasetManifest};
use echosim::phantom::{BONE, FAT, FLUID, ORGAN, SOFT_TISSUE};
use echosim::Channel;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::RenderArgs;

/// Gap between panels, in pixels.
pub const GAP: usize = 4;

/// Fixed gray level per tissue label; unlisted labels map to 128.
pub const LABEL_LUT: [(u8, u8); 5] = [(SOFT_TISSUE, 96), (FLUID, 32), (BONE, 255), (ORGAN, 160), (FAT, 208)];

pub fn label_gray(label: f32) -> u8 {
    LABEL_LUT
        .iter()
        .find(|(l, _)| *l as f32 == label)
        .map_or(128, |&(_, g)| g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelInfo {
    pub channel: String,
    pub col_offset: usize,
    pub min: f32,
    pub max: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderInfo {
    pub sample_id: String,
    pub panels: Vec<PanelInfo>,
}

fn range(g: &Array2<f32>) -> (f32, f32) {
    g.iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub(crate) fn cmd_render(args: &RenderArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::read(&args.data)?;
    let root = if args.data.is_dir() {
        args.data.clone()
    } else {
        args.data.parent().map(|p| p.to_path_buf()).unwrap_or_default()
    };
    let record = manifest
        .record(&args.id)
        .ok_or_else(|| echosim::Error::UnknownSample(args.id.clone()))?;
    let mask = read_channel(&root, record, Channel::M)?;
    let (h, w) = mask.dim();
    let order = [Channel::X, Channel::S, Channel::A, Channel::Y];
    let width = order.len() * w + (order.len() - 1) * GAP;
    let mut canvas = Array2::<u8>::zeros((h, width));
    let mut panels = Vec::new();
    for (k, &c) in order.iter().enumerate() {
        let grid = read_channel(&root, record, c)?;
        if grid.dim() != (h, w) {
            anyhow::bail!(echosim::Error::DimensionMismatch {
                expected: (h, w),
                found: grid.dim()
            });
        }
        let (min, max) = range(&grid);
        let col_offset = k * (w + GAP);
        let mut view = canvas.slice_mut(s![.., col_offset..col_offset + w]);
        for ((p, &v), &m) in view.iter_mut().zip(grid.iter()).zip(mask.iter()) {
            *p = if m == 0.0 {
                0
            } else {
                match c {
                    Channel::S => label_gray(v),
                    Channel::A => (v.clamp(0.0, 1.0) * 255.0).round() as u8,
                    _ => v.clamp(0.0, 255.0).round() as u8,
                }
            };
        }
        panels.push(PanelInfo {
            channel: c.name().to_string(),
            col_offset,
            min,
            max,
        });
    }
    let img = image::GrayImage::from_raw(width as u32, h as u32, canvas.into_raw_vec_and_offset().0)
        .expect("buffer sized to image");
    img.save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let info = RenderInfo {
        sample_id: args.id.clone(),
        panels,
    };
    let sidecar = args.out.with_extension("json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&info)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    println!("{} ({}x{h}) and {}", args.out.display(), width, sidecar.display());
    Ok(())
}
