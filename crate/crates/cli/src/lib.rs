//! `echosim` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! data errors (missing or corrupt files, unknown ids, I/O failures).

pub mod config;
mod render;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use echosim::attenmap::{attenuation_integral, normalize_98};
use echosim::dataset::{generate_corpus, rawfmt, write_preview, DatasetManifest, SampleBuilder, Split};
use echosim::metrics::{evaluate, render_table, EvalOptions, FeatureMatrix, MetricsReport, PredictionSource, PsnrMode};
use echosim::scanconvert::{beam_mask_in, scan_convert_attenuation};
use echosim::{generate_phantom, CartesianFrame, Channel, PhantomSpec, Simulator};

use config::{PhantomChoice, Preset, RunConfig};

/// Marks an error as a usage or configuration problem (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "echosim", version, about = "Paired ultrasound simulation, datasets and translation metrics")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write its manifest.
    Generate(GenerateArgs),
    /// Score predictions against the eval split.
    Evaluate(EvaluateArgs),
    /// Write an x | s | a | y panel of one sample as PNG.
    Render(RenderArgs),
    /// Write the beam mask of a geometry.
    Mask(MaskArgs),
    /// Write the normalized attenuation map of a phantom.
    Attenmap(AttenmapArgs),
    /// Describe a raw grid file or a dataset directory.
    Inspect(InspectArgs),
    /// Print a run configuration preset as TOML.
    Config {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
    },
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Run config TOML; its keys override the preset and flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl GeometryArgs {
    fn resolve(&self, apply_flags: impl FnOnce(&mut RunConfig)) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::preset(self.preset);
        apply_flags(&mut cfg);
        if let Some(path) = &self.config {
            cfg = cfg.load_over(path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub base: GeometryArgs,
    /// Dataset directory.
    #[arg(long, env = "ECHOSIM_OUTPUT_ROOT", default_value = "echosim-data")]
    pub out: PathBuf,
    /// Number of samples.
    #[arg(long)]
    pub count: Option<usize>,
    /// Run seed; every sample seed derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Phantom TOML used for every sample instead of procedural phantoms.
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    /// Also write x.png / y.png previews.
    #[arg(long)]
    pub previews: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset directory (or manifest file).
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction directory holding `<sample_id>.f32`; repeatable.
    #[arg(long = "pred")]
    pub predictions: Vec<PathBuf>,
    /// Row labels for the prediction directories, in order.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Add the identity baseline (LQ input scored as prediction).
    #[arg(long)]
    pub baseline: bool,
    /// Add the targets scored against themselves.
    #[arg(long)]
    pub targets: bool,
    #[arg(long, value_enum, default_value = "paper")]
    pub psnr_mode: PsnrModeArg,
    /// External prediction features (raw grid, rows = samples); needs
    /// --target-features and a single --pred.
    #[arg(long, requires = "target_features")]
    pub pred_features: Option<PathBuf>,
    #[arg(long, requires = "pred_features")]
    pub target_features: Option<PathBuf>,
    /// Report directory; defaults to `<data>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PsnrModeArg {
    Paper,
    Standard,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub id: String,
    /// Output PNG; a `.json` sidecar with per-panel ranges is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub base: GeometryArgs,
    /// Output raw grid (`.f32`); a PNG is written too with --png.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct AttenmapArgs {
    #[command(flatten)]
    pub base: GeometryArgs,
    /// Phantom TOML; without it a procedural phantom is drawn from --seed.
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the beam grid instead of scan converting.
    #[arg(long)]
    pub polar: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A `.f32` grid or a dataset directory.
    pub path: PathBuf,
    /// For datasets, decode and checksum every file.
    #[arg(long)]
    pub deep: bool,
}

/// Exit code for a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<echosim::Error>() {
            return if e.is_config() { 1 } else { 2 };
        }
    }
    2
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    pool.install(|| match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Render(a) => render::cmd_render(&a),
        Command::Mask(a) => cmd_mask(&a),
        Command::Attenmap(a) => cmd_attenmap(&a),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Config { preset } => {
            print!("{}", RunConfig::preset(preset).to_toml());
            Ok(())
        }
    })
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let cfg = args.base.resolve(|c| {
        if let Some(n) = args.count {
            c.dataset.count = n;
        }
        if let Some(s) = args.seed {
            c.dataset.seed = s;
        }
        if let Some(p) = &args.phantom {
            c.phantom = PhantomChoice::File { path: p.clone() };
        }
        c.dataset.previews |= args.previews;
    })?;
    let phantom = cfg.phantom_source()?;
    let hash = cfg.hash(&phantom);
    let simulator = Simulator::new(cfg.acoustics)?;
    let builder = SampleBuilder::new(simulator, cfg.geometry, cfg.output_size)?;
    let manifest = generate_corpus(&args.out, &builder, &phantom, &cfg.dataset, &hash)
        .with_context(|| format!("generating into {}", args.out.display()))?;
    let config_path = args.out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).with_context(|| format!("writing {}", config_path.display()))?;
    println!(
        "{} samples ({} train, {} eval) in {}; config {}",
        manifest.records.len(),
        manifest.records_in(Split::Train).count(),
        manifest.records_in(Split::Eval).count(),
        args.out.display(),
        &hash[..12]
    );
    Ok(())
}

fn read_manifest(data: &Path) -> anyhow::Result<(DatasetManifest, PathBuf)> {
    let manifest = DatasetManifest::read(data)?;
    let root = if data.is_dir() {
        data.to_path_buf()
    } else {
        data.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    Ok((manifest, root))
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let (manifest, root) = read_manifest(&args.data)?;
    if args.predictions.is_empty() && !args.baseline && !args.targets {
        bail!(UsageError("nothing to evaluate: pass --pred, --baseline or --targets".into()));
    }
    if args.labels.len() > args.predictions.len() {
        bail!(UsageError("more --label values than --pred directories".into()));
    }
    let external = match (&args.pred_features, &args.target_features) {
        (Some(p), Some(t)) => {
            if args.predictions.len() != 1 || args.baseline || args.targets {
                bail!(UsageError("external features apply to exactly one --pred set".into()));
            }
            Some((FeatureMatrix::read(p, "external")?, FeatureMatrix::read(t, "external")?))
        }
        _ => None,
    };
    let psnr_mode = match args.psnr_mode {
        PsnrModeArg::Paper => PsnrMode::Paper,
        PsnrModeArg::Standard => PsnrMode::Standard,
    };

    let mut sets: Vec<(String, PredictionSource)> = Vec::new();
    if args.baseline {
        sets.push(("identity".into(), PredictionSource::Channel(Channel::X)));
    }
    for (i, dir) in args.predictions.iter().enumerate() {
        let label = args.labels.get(i).cloned().unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("pred{i}"))
        });
        sets.push((label, PredictionSource::Dir(dir.clone())));
    }
    if args.targets {
        sets.push(("targets".into(), PredictionSource::Channel(Channel::Y)));
    }

    let mut reports = Vec::new();
    for (label, source) in sets {
        let options = EvalOptions {
            label: label.clone(),
            psnr_mode,
            external_features: external.as_ref().map(|(p, t)| (p, t)),
            ..EvalOptions::default()
        };
        let report = evaluate(&manifest, &root, &source, &options).with_context(|| format!("evaluating {label}"))?;
        reports.push(report);
    }

    let out = args.out.clone().unwrap_or_else(|| root.join("eval"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for r in &reports {
        let path = out.join(format!("{}.json", file_stem(&r.label)));
        std::fs::write(&path, r.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    let table = render_table(&reports);
    let path = out.join("table.txt");
    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{table}");
    Ok(())
}

/// File-system-safe version of a report label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Reads a report written by `evaluate`.
pub fn read_report(path: &Path) -> anyhow::Result<MetricsReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MetricsReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn frame_of(cfg: &RunConfig) -> anyhow::Result<CartesianFrame> {
    Ok(CartesianFrame::fit(&cfg.geometry, cfg.output_size)?)
}

fn cmd_mask(args: &MaskArgs) -> anyhow::Result<()> {
    let cfg = args.base.resolve(|_| {})?;
    let mask = beam_mask_in(&frame_of(&cfg)?);
    let grid = mask.pixels.mapv(f32::from);
    rawfmt::write_grid(&args.out, &grid)?;
    if args.png {
        write_preview(&args.out.with_extension("png"), &grid, 0.0, 1.0)?;
    }
    let (h, w) = grid.dim();
    println!("mask {h}x{w}, {} pixels in beam -> {}", mask.area(), args.out.display());
    Ok(())
}

fn cmd_attenmap(args: &AttenmapArgs) -> anyhow::Result<()> {
    let cfg = args.base.resolve(|_| {})?;
    let spec = match &args.phantom {
        Some(p) => PhantomSpec::load(p).map_err(|e| UsageError(e.to_string()))?,
        None => PhantomSpec::procedural(args.seed, &cfg.geometry),
    };
    let map = generate_phantom(&spec, &cfg.geometry)?;
    let att = normalize_98(&attenuation_integral(&map))?;
    let grid = if args.polar {
        att.values.mapv(|v| v as f32)
    } else {
        scan_convert_attenuation(&att, &frame_of(&cfg)?)?.values.mapv(|v| v as f32)
    };
    rawfmt::write_grid(&args.out, &grid)?;
    if args.png {
        write_preview(&args.out.with_extension("png"), &grid, 0.0, 1.0)?;
    }
    let (h, w) = grid.dim();
    println!(
        "attenuation map {h}x{w}, reference {:.6} -> {}",
        att.reference.unwrap_or(0.0),
        args.out.display()
    );
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> anyhow::Result<()> {
    if args.path.is_dir() {
        let (manifest, root) = read_manifest(&args.path)?;
        manifest.validate(&root, args.deep)?;
        println!("dataset {}", root.display());
        println!("  config hash  {}", manifest.config_hash);
        for (split, name) in [(Split::Train, "train"), (Split::Eval, "eval"), (Split::Unassigned, "unassigned")] {
            let n = manifest.records_in(split).count();
            if n > 0 {
                println!("  {:<12} {n}", format!("{name} set"));
            }
        }
        let crops: usize = manifest.records.iter().map(|r| r.crops.len()).sum();
        println!("  eval crops   {crops}");
        println!("  files        ok{}", if args.deep { " (checksums verified)" } else { "" });
        return Ok(());
    }
    let grid = rawfmt::read_grid(&args.path)?;
    let (h, w) = grid.dim();
    let (mut lo, mut hi, mut sum) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f64);
    for &v in grid.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v as f64;
    }
    println!("{}: {h}x{w} f32, checksum ok", args.path.display());
    if h * w > 0 {
        println!("  min {lo}  max {hi}  mean {:.6}", sum / (h * w) as f64);
    }
    Ok(())
}
