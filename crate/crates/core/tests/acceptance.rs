//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use echosim::acoustics::envelope;
use echosim::dataset::{
    crop_patches, generate_corpus, read_sample, write_sample, CorpusOptions, PhantomSource, SampleBuilder,
    SampleTuple, Split,
};
use echosim::metrics::{
    evaluate, frechet_distance, pkl, psnr, render_table, ssim, EvalOptions, FeatureMatrix, PredictionSource,
    PsnrMode, HIGH_PERCENTILE, LOW_PERCENTILE,
};
use echosim::phantom::{TissueProperties, BONE, SOFT_TISSUE};
use echosim::scanconvert::{beam_mask_in, scan_convert_into, BeamMask, CartesianImage};
use echosim::{
    attenuation_integral, generate_phantom, BeamGeometry, CartesianFrame, Channel, Interpolation, PhantomSpec,
    PropertyTable, SimQuality, Simulator, TissueMap,
};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn attenuation_correctness() -> Outcome {
    let g = BeamGeometry::desk();
    let mut max_rel = 0.0f64;
    let mut monotone = true;
    let mut elapsed = 0.0;
    for seed in 0..100 {
        let start = Instant::now();
        let map = generate_phantom(&PhantomSpec::procedural(seed, &g), &g).map_err(|e| e.to_string())?;
        let att = attenuation_integral(&map);
        elapsed += start.elapsed().as_secs_f64();

        for s in 0..g.scanline_count {
            let mut sum = 0.0;
            for z in 0..g.axial_samples {
                sum += map.properties().get(map.label(s, z)).unwrap().attenuation_mu;
                let oracle = (-sum).exp();
                let got = att.values[[s, z]];
                max_rel = max_rel.max((got - oracle).abs() / oracle);
                if z > 0 && got > att.values[[s, z - 1]] {
                    monotone = false;
                }
            }
        }
    }
    check(
        max_rel <= 1e-12 && monotone && elapsed < 5.0,
        format!("100 phantoms, max rel err {max_rel:.1e}, monotone {monotone}, {elapsed:.2} s"),
    )
}

fn product_sum_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = BeamGeometry::desk();
    let mut max_rel = 0.0f64;
    for _ in 0..20 {
        let mut table = PropertyTable::new();
        for l in 0..=255u8 {
            let p = TissueProperties {
                impedance: 1.5,
                attenuation_mu: rng.random_range(0.0..0.05),
                scatterer_mean: 0.0,
                scatterer_std: 0.0,
                scatterer_density: 0.0,
            };
            table.insert(l, "random", p).unwrap();
        }
        let labels = Array2::from_shape_fn(g.dim(), |_| rng.random::<u8>());
        let map = TissueMap::new(labels, table, g, 0).map_err(|e| e.to_string())?;
        let att = attenuation_integral(&map);
        for s in 0..g.scanline_count {
            let mut product = 1.0;
            for z in 0..g.axial_samples {
                product *= (-map.properties().get(map.label(s, z)).unwrap().attenuation_mu).exp();
                max_rel = max_rel.max((att.values[[s, z]] - product).abs() / product);
            }
        }
    }
    check(max_rel <= 1e-12, format!("20 random grids, max rel err {max_rel:.1e}"))
}

fn shipped_phantom() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/bone_phantom.toml")
}

fn shadow_contrast() -> Outcome {
    let spec = PhantomSpec::load(&shipped_phantom()).map_err(|e| e.to_string())?;
    let g = BeamGeometry::desk();
    let map = generate_phantom(&spec, &g).map_err(|e| e.to_string())?;
    let (_, hq) = Simulator::default().simulate_pair(&map, 1).map_err(|e| e.to_string())?;
    let labels = map.labels();
    let bone_lines: Vec<usize> = (0..g.scanline_count)
        .filter(|&s| labels.row(s).iter().any(|&l| l == BONE))
        .collect();
    let (first, last) = (bone_lines[0], *bone_lines.last().unwrap());
    let bottom = (0..g.axial_samples)
        .rev()
        .find(|&z| bone_lines.iter().any(|&s| labels[[s, z]] == BONE))
        .unwrap();
    // Shadow: scanlines crossing bone, away from the lateral PSF tails.
    // Reference: scanlines beside them that cross no bone, at the same depths.
    let margin = 4;
    let shadow: Vec<usize> = (first + margin..=last - margin).collect();
    let right: Vec<usize> = (last + 2 * margin..(last + 2 * margin + shadow.len()).min(g.scanline_count)).collect();
    let left: Vec<usize> = (first.saturating_sub(2 * margin + shadow.len())..first.saturating_sub(2 * margin)).collect();
    let depths = bottom + 10..(bottom + 110).min(g.axial_samples);
    let mean = |lines: &[usize]| {
        let vals: Vec<f64> = lines
            .iter()
            .flat_map(|&s| depths.clone().map(move |z| (s, z)))
            .filter(|&(s, z)| labels[[s, z]] == SOFT_TISSUE)
            .map(|p| hq.samples[p])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let (ms, mr, ml) = (mean(&shadow), mean(&right), mean(&left));
    let ratio = ms / mr.min(ml);
    check(
        ratio < 0.5,
        format!("shadow {ms:.1} vs adjacent {ml:.1} (left) / {mr:.1} (right), ratio {ratio:.3}"),
    )
}

fn speckle_ordering() -> Outcome {
    let g = BeamGeometry::desk();
    let map = generate_phantom(&PhantomSpec::homogeneous(SOFT_TISSUE), &g).map_err(|e| e.to_string())?;
    let sim = Simulator::default();
    let mu = map.background_properties().attenuation_mu;
    let run = |q: SimQuality, seed: u64| {
        let rf = sim.simulate_rf(&map, q, seed).unwrap();
        let mut env = envelope(&rf.samples, sim.params());
        for (z, mut col) in env.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * (2.0 * z as f64 * mu).exp());
        }
        env
    };
    let variance = |q: SimQuality| {
        let stack: Vec<_> = (0..20).map(|s| run(q, s)).collect();
        let n = stack.len() as f64;
        let (mut total, mut count) = (0.0, 0usize);
        // Interior pixels, clear of the zero-padded image borders.
        for s in 8..g.scanline_count - 8 {
            for z in 64..g.axial_samples - 64 {
                let m = stack.iter().map(|a| a[[s, z]]).sum::<f64>() / n;
                total += stack.iter().map(|a| (a[[s, z]] - m).powi(2)).sum::<f64>() / (n - 1.0);
                count += 1;
            }
        }
        total / count as f64
    };
    let (lq, hq) = (variance(SimQuality::LOW), variance(SimQuality::HIGH));
    let ratio = hq / lq;
    check(
        hq < lq && (1.0 / 192.0..=1.0 / 12.0).contains(&ratio),
        format!("20 seeds, var HQ/LQ = {ratio:.5} (1/{:.1})", 1.0 / ratio),
    )
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Array2::from_shape_fn((64, 64), |_| rng.random_range(0.0..255.0f32).round());
    let p = psnr(&a, &a, PsnrMode::Paper).map_err(|e| e.to_string())?;
    let s = ssim(&a, &a).map_err(|e| e.to_string())?;
    let k = pkl(&a, &a, 32, 50).map_err(|e| e.to_string())?;
    let f = FeatureMatrix::new(Array2::from_shape_fn((40, 5), |_| rng.random::<f64>()), "r").unwrap();
    let ff = frechet_distance(&f, &f).map_err(|e| e.to_string())?;
    // Means 0 and 3, variances 1 and 4 (unbiased).
    let f1 = FeatureMatrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.0]], "s").unwrap();
    let f2 = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0], vec![5.0]], "s").unwrap();
    let scalar = frechet_distance(&f1, &f2).map_err(|e| e.to_string())?;
    check(
        p == f64::INFINITY && s == 1.0 && k == 0.0 && ff <= 1e-8 && scalar == 10.0,
        format!("psnr {p}, ssim {s}, pkl {k}, frechet(F,F) {ff:.1e}, scalar case {scalar}"),
    )
}

fn method_table_ordering() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let builder = SampleBuilder::new(
        Simulator::default(),
        BeamGeometry::desk(),
        echosim::scanconvert::DEFAULT_OUTPUT_SIZE,
    )
    .map_err(|e| e.to_string())?;
    let opts = CorpusOptions {
        count: 200,
        seed: 42,
        ..CorpusOptions::default()
    };
    let start = Instant::now();
    let manifest = generate_corpus(dir.path(), &builder, &PhantomSource::Procedural, &opts, "acceptance")
        .map_err(|e| e.to_string())?;
    let gen_s = start.elapsed().as_secs_f64();
    let n_eval = manifest.records_in(Split::Eval).count();
    let n_train = manifest.records_in(Split::Train).count();

    let report = |source: Channel, label: &str| {
        let opts = EvalOptions {
            label: label.into(),
            ..EvalOptions::default()
        };
        evaluate(&manifest, dir.path(), &PredictionSource::Channel(source), &opts).map_err(|e| e.to_string())
    };
    let baseline = report(Channel::X, "identity (LQ input)")?;
    let target = report(Channel::Y, "targets")?;
    println!("{}", render_table(&[baseline.clone(), target.clone()]));

    let worse = baseline.psnr.mean < target.psnr.mean
        && baseline.ssim.mean < target.ssim.mean
        && baseline.pkl.mean > target.pkl.mean
        && baseline.fid > target.fid;
    let ranks = [baseline.psnr, baseline.ssim, baseline.pkl].map(|s| s.percentile_rank)
        == [LOW_PERCENTILE, LOW_PERCENTILE, HIGH_PERCENTILE];
    check(
        worse && ranks && n_train == 180 && n_eval == 20,
        format!(
            "{n_train}/{n_eval} split, {} pairs, baseline psnr {:.2} ssim {:.4} pkl {:.4} fid {:.4} vs targets psnr {} ssim {} pkl {} fid {:.1e} ({gen_s:.0} s to generate)",
            baseline.pairs.len(),
            baseline.psnr.mean,
            baseline.ssim.mean,
            baseline.pkl.mean,
            baseline.fid,
            target.psnr.mean,
            target.ssim.mean,
            target.pkl.mean,
            target.fid,
        ),
    )
}

fn random_tuple(rng: &mut ChaCha8Rng, k: usize) -> SampleTuple {
    let g = BeamGeometry {
        scanline_count: rng.random_range(4..64),
        axial_samples: rng.random_range(8..128),
        fov_deg: rng.random_range(20.0..120.0),
        ..BeamGeometry::desk()
    };
    let (h, w) = (rng.random_range(8..80), rng.random_range(8..80));
    let frame = CartesianFrame::fit(&g, (h, w)).unwrap();
    let m = beam_mask_in(&frame);
    let mut field = |hi: f32, int: bool| {
        let pixels = Array2::from_shape_fn((h, w), |p| {
            if m.pixels[p] == 0 {
                return 0.0;
            }
            let v = rng.random_range(0.0..=hi);
            if int {
                v.floor()
            } else {
                v
            }
        });
        CartesianImage { pixels, frame }
    };
    SampleTuple {
        sample_id: format!("r{k:03}"),
        seed: k as u64,
        x: field(255.0, false),
        y: field(255.0, false),
        s: field(4.0, true),
        a: field(1.0, false),
        m: BeamMask {
            pixels: m.pixels.clone(),
            frame,
        },
    }
}

fn bits(t: &SampleTuple) -> Vec<Vec<u32>> {
    Channel::ALL
        .iter()
        .map(|&c| t.channel(c).iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn dataset_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 0..100 {
        let t = random_tuple(&mut rng, k);
        write_sample(dir.path(), &t).map_err(|e| e.to_string())?;
        let back = read_sample(dir.path(), &t.sample_id).map_err(|e| e.to_string())?;
        if bits(&back) != bits(&t) || back != t {
            return Err(format!("tuple {k} differs after round trip"));
        }
    }

    let builder = SampleBuilder::new(Simulator::default(), BeamGeometry::desk(), (256, 354)).unwrap();
    let full = builder
        .build("full", &PhantomSpec::bone_demo(), 3)
        .map_err(|e| e.to_string())?;
    let mut max_err = 0.0f64;
    for seed in 0..100 {
        let crop = &crop_patches(&full, 64, 1, seed).map_err(|e| e.to_string())?[0];
        let (pitch, cf, ff) = (full.frame().pitch_cm, crop.frame(), full.frame());
        let r0 = ((cf.y0_cm - ff.y0_cm) / pitch).round() as usize;
        let c0 = ((cf.x0_cm - ff.x0_cm) / pitch).round() as usize;
        for c in Channel::ALL {
            let (whole, part) = (full.channel(c), crop.channel(c));
            for ((r, col), v) in part.indexed_iter() {
                if whole[[r0 + r, c0 + col]].to_bits() != v.to_bits() {
                    return Err(format!("crop {seed}: channel {} misaligned at ({r},{col})", c.name()));
                }
            }
        }
        for r in (0..64).step_by(7) {
            for col in (0..64).step_by(7) {
                if let (Some(a), Some(b)) = (cf.to_polar(r, col), ff.to_polar(r0 + r, c0 + col)) {
                    max_err = max_err.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
                } else if cf.to_polar(r, col).is_some() != ff.to_polar(r0 + r, c0 + col).is_some() {
                    return Err(format!("crop {seed}: frame support differs at ({r},{col})"));
                }
            }
        }
    }
    check(
        max_err < 1e-9,
        format!("100 tuples bit-identical, 100 crops aligned (frame error {max_err:.1e})"),
    )
}

fn mask_consistency() -> Outcome {
    let mut cases = 0;
    for (fov, size) in [(70.0, (512, 708)), (70.0, (97, 131)), (30.0, (64, 64)), (150.0, (200, 120))] {
        let g = BeamGeometry {
            fov_deg: fov,
            ..BeamGeometry::desk()
        };
        let frame = CartesianFrame::fit(&g, size).map_err(|e| e.to_string())?;
        let ones = Array2::from_elem(g.dim(), 1.0);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            let img = scan_convert_into(&ones, &frame, interp).map_err(|e| e.to_string())?;
            let support = img.pixels.mapv(|v| (v != 0.0) as u8);
            if support != beam_mask_in(&frame).pixels {
                return Err(format!("fov {fov}, size {size:?}, {interp:?}: mask differs"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} geometry/size/interpolation cases identical"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("attenuation correctness", attenuation_correctness),
        ("product/sum equivalence", product_sum_equivalence),
        ("shadow contrast", shadow_contrast),
        ("LQ/HQ speckle ordering", speckle_ordering),
        ("metric identities", metric_identities),
        ("method table ordering", method_table_ordering),
        ("dataset round trip", dataset_round_trip),
        ("mask/data consistency", mask_consistency),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(d) => format!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                format!("FAIL  {name}: {d} [{secs:.1} s]")
            }
        };
        println!("{line}");
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
