use echosim::acoustics::envelope;
use echosim::phantom::{Shape, TissueProperties, BONE, SOFT_TISSUE};
use echosim::{
    generate_phantom, AcousticParams, BeamGeometry, PhantomSpec, PropertyTable, SimQuality, Simulator, TissueMap,
};
use ndarray::{Array2, Axis};

fn tgc_envelope(sim: &Simulator, map: &TissueMap, q: SimQuality, seed: u64) -> Array2<f64> {
    let rf = sim.simulate_rf(map, q, seed).unwrap();
    let mut env = envelope(&rf.samples, sim.params());
    let mu = map.background_properties().attenuation_mu;
    for (z, mut col) in env.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v * (2.0 * z as f64 * mu).exp());
    }
    env
}

fn per_pixel_variance(stack: &[Array2<f64>], rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
    let n = stack.len() as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in rows {
        for c in cols.clone() {
            let m = stack.iter().map(|a| a[[r, c]]).sum::<f64>() / n;
            total += stack.iter().map(|a| (a[[r, c]] - m).powi(2)).sum::<f64>() / (n - 1.0);
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn hq_speckle_variance_is_about_one_ninety_sixth() {
    let g = BeamGeometry::desk();
    let map = generate_phantom(&PhantomSpec::homogeneous(SOFT_TISSUE), &g).unwrap();
    let sim = Simulator::default();
    let lq: Vec<_> = (0..20).map(|s| tgc_envelope(&sim, &map, SimQuality::LOW, s)).collect();
    let hq: Vec<_> = (0..20).map(|s| tgc_envelope(&sim, &map, SimQuality::HIGH, s)).collect();
    let (rows, cols) = (8..120, 64..448);
    let ratio = per_pixel_variance(&hq, rows.clone(), cols.clone()) / per_pixel_variance(&lq, rows, cols);
    eprintln!("variance ratio HQ/LQ = {ratio:.5} (1/{:.1})", 1.0 / ratio);
    assert!((1.0 / 192.0..=1.0 / 12.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn bone_casts_a_shadow() {
    let g = BeamGeometry::desk();
    let map = generate_phantom(&PhantomSpec::bone_demo(), &g).unwrap();
    let (_, hq) = Simulator::default().simulate_pair(&map, 11).unwrap();
    let labels = map.labels();
    let bone_lines: Vec<usize> = (0..g.scanline_count)
        .filter(|&s| labels.row(s).iter().any(|&l| l == BONE))
        .collect();
    let bottom = (0..g.axial_samples)
        .rev()
        .find(|&z| bone_lines.iter().any(|&s| labels[[s, z]] == BONE))
        .unwrap();
    let (first, last) = (bone_lines[0], *bone_lines.last().unwrap());
    eprintln!("bone scanlines {first}..={last}, bottom sample {bottom}");
    // Core of the shadow and flanks clear of the lateral PSF support.
    let shadow: Vec<usize> = (first + 4..=last - 4).collect();
    let flank: Vec<usize> = (last + 8..last + 8 + shadow.len()).collect();
    let depths = bottom + 20..bottom + 120;
    let mean = |lines: &[usize]| {
        let mut v = Vec::new();
        for &s in lines {
            for z in depths.clone() {
                v.push(hq.samples[[s, z]]);
            }
        }
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (ms, mf) = (mean(&shadow), mean(&flank));
    eprintln!("shadow {ms:.2} vs flank {mf:.2}");
    assert!(ms < 0.5 * mf);
}

fn props(density: f64, mean: f64) -> TissueProperties {
    TissueProperties {
        impedance: 1.5,
        attenuation_mu: 0.0,
        scatterer_mean: mean,
        scatterer_std: 0.0,
        scatterer_density: density,
    }
}

/// PSF evaluated directly at offset `(ds, dz)` from a unit scatterer.
fn psf_at(sim: &Simulator, ds: f64, dz: f64, z: usize, nz: usize) -> f64 {
    let p = sim.params().psf;
    if dz.abs() > (4.0 * p.axial_sigma).ceil() {
        return 0.0;
    }
    let axial = (-dz * dz / (2.0 * p.axial_sigma * p.axial_sigma)).exp()
        * (2.0 * std::f64::consts::PI * p.carrier_cycles_per_sample * dz).cos();
    let sigma = p.lateral_sigma_near + (p.lateral_sigma_far - p.lateral_sigma_near) * z as f64 / (nz - 1) as f64;
    let half = (3.0 * sigma).ceil() as i64;
    if ds.abs() > half as f64 {
        return 0.0;
    }
    let g = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp();
    let norm: f64 = (-half..=half).map(|j| g(j as f64)).sum();
    axial * g(ds) / norm
}

#[test]
fn single_scatterer_images_as_the_psf() {
    let g = BeamGeometry {
        scanline_count: 32,
        axial_samples: 256,
        ..BeamGeometry::desk()
    };
    let (s0, z0) = (16, 128);
    let mut table = PropertyTable::new();
    table.insert(0, "empty", props(0.0, 0.0)).unwrap();
    table.insert(1, "point", props(1.0, 1.0)).unwrap();
    let spec = PhantomSpec {
        tissues: Some(table),
        ..PhantomSpec::homogeneous(0)
    }
    .with_inclusion(
        1,
        Shape::Ellipse {
            center_deg: g.scanline_angle_deg(s0),
            center_cm: g.sample_depth_cm(z0),
            half_width_deg: 0.3 * g.scanline_step_deg(),
            half_depth_cm: 0.3 * g.axial_step_cm(),
        },
    );
    let map = generate_phantom(&spec, &g).unwrap();
    assert_eq!(map.histogram()[&1], 1);
    let sim = Simulator::default();
    let rf = sim.simulate_rf(&map, SimQuality::LOW, 5).unwrap();
    for s in 0..g.scanline_count {
        for z in 0..g.axial_samples {
            let expected = psf_at(&sim, s as f64 - s0 as f64, z as f64 - z0 as f64, z, g.axial_samples);
            assert!((rf.samples[[s, z]] - expected).abs() < 1e-12, "({s},{z})");
        }
    }
}

#[test]
fn pair_is_independent_of_thread_count() {
    let g = BeamGeometry {
        scanline_count: 48,
        axial_samples: 192,
        ..BeamGeometry::desk()
    };
    let map = generate_phantom(&PhantomSpec::procedural(3, &g), &g).unwrap();
    let sim = Simulator::new(AcousticParams::default()).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sim.simulate_pair(&map, 99).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.0.samples, b.0.samples);
    assert_eq!(a.1.samples, b.1.samples);
}
