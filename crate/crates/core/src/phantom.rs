//! Procedural 2D tissue phantoms sampled on the beam (polar) grid.
//!
//! A phantom is a background tissue plus an ordered list of parametric
//! inclusions (ellipses and depth bands) expressed in beam coordinates:
//! steering angle in degrees (0 = probe axis, negative = left) and depth in
//! centimetres below the probe surface. Inclusions are rasterized in list
//! order, so later entries overwrite earlier ones.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::BeamGeometry;
use crate::error::{Error, Result};
use crate::rng;

/// Tissue label id as stored in label grids and segmentation maps.
pub type Label = u8;

pub const SOFT_TISSUE: Label = 0;
pub const FLUID: Label = 1;
pub const BONE: Label = 2;
pub const ORGAN: Label = 3;
pub const FAT: Label = 4;

/// Amplitude attenuation in nepers per dB.
const NEPER_PER_DB: f64 = std::f64::consts::LN_10 / 20.0;

/// Acoustic description of one tissue type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueProperties {
    /// Acoustic impedance in MRayl.
    pub impedance: f64,
    /// Attenuation per axial sample (nepers of amplitude), already scaled by
    /// transducer frequency and axial step.
    pub attenuation_mu: f64,
    pub scatterer_mean: f64,
    pub scatterer_std: f64,
    /// Fraction of grid cells holding a scatterer.
    pub scatterer_density: f64,
}

impl TissueProperties {
    /// Converts a literature attenuation coefficient in dB/cm/MHz into the
    /// per-sample constant used by the simulator.
    pub fn mu_from_db(db_per_cm_mhz: f64, frequency_mhz: f64, axial_step_cm: f64) -> f64 {
        db_per_cm_mhz * frequency_mhz * axial_step_cm * NEPER_PER_DB
    }

    pub fn validate(&self, label: Label) -> Result<()> {
        let ok = self.impedance > 0.0
            && self.attenuation_mu >= 0.0
            && self.scatterer_std >= 0.0
            && (0.0..=1.0).contains(&self.scatterer_density)
            && self.scatterer_mean.is_finite()
            && self.attenuation_mu.is_finite()
            && self.impedance.is_finite()
            && self.scatterer_std.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "tissue {label}: invalid acoustic properties {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueEntry {
    pub label: Label,
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub properties: TissueProperties,
}

/// Label id → acoustic properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TissueEntry>", into = "Vec<TissueEntry>")]
pub struct PropertyTable {
    entries: BTreeMap<Label, (String, TissueProperties)>,
}

impl TryFrom<Vec<TissueEntry>> for PropertyTable {
    type Error = Error;

    fn try_from(list: Vec<TissueEntry>) -> Result<Self> {
        let mut table = PropertyTable {
            entries: BTreeMap::new(),
        };
        for e in list {
            e.properties.validate(e.label)?;
            if table
                .entries
                .insert(e.label, (e.name, e.properties))
                .is_some()
            {
                return Err(Error::Config(format!("tissue {} listed twice", e.label)));
            }
        }
        Ok(table)
    }
}

impl From<PropertyTable> for Vec<TissueEntry> {
    fn from(table: PropertyTable) -> Self {
        table
            .entries
            .into_iter()
            .map(|(label, (name, properties))| TissueEntry {
                label,
                name,
                properties,
            })
            .collect()
    }
}

impl std::fmt::Display for PropertyTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (label, (name, p)) in &self.entries {
            writeln!(
                f,
                "{label:>3} {name:<12} Z={:.2} mu={:.4} scat=N({:.2},{:.2}) p={:.2}",
                p.impedance, p.attenuation_mu, p.scatterer_mean, p.scatterer_std, p.scatterer_density
            )?;
        }
        Ok(())
    }
}

impl PropertyTable {
    pub fn new() -> Self {
        PropertyTable {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, label: Label, name: &str, properties: TissueProperties) -> Result<()> {
        properties.validate(label)?;
        self.entries.insert(label, (name.to_string(), properties));
        Ok(())
    }

    pub fn get(&self, label: Label) -> Option<&TissueProperties> {
        self.entries.get(&label).map(|(_, p)| p)
    }

    pub fn name(&self, label: Label) -> Option<&str> {
        self.entries.get(&label).map(|(n, _)| n.as_str())
    }

    pub fn contains(&self, label: Label) -> bool {
        self.entries.contains_key(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &TissueProperties)> {
        self.entries.iter().map(|(l, (_, p))| (*l, p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dense lookup of one property over all 256 possible labels (0 for
    /// labels without an entry).
    pub(crate) fn lookup(&self, f: impl Fn(&TissueProperties) -> f64) -> [f64; 256] {
        let mut out = [0.0; 256];
        for (l, p) in self.iter() {
            out[l as usize] = f(p);
        }
        out
    }

    /// Default tissues with attenuation converted for `geometry`.
    ///
    /// The values are aesthetic defaults in the range of published soft-tissue
    /// figures. Bone attenuates strongly enough to leave a full shadow behind a
    /// few millimetres of thickness at 8 MHz; fluid is anechoic.
    pub fn for_geometry(geometry: &BeamGeometry) -> Self {
        let dz = geometry.axial_step_cm();
        let f = geometry.frequency_mhz;
        let tissue = |z: f64, db: f64, mean: f64, std: f64, density: f64| TissueProperties {
            impedance: z,
            attenuation_mu: TissueProperties::mu_from_db(db, f, dz),
            scatterer_mean: mean,
            scatterer_std: std,
            scatterer_density: density,
        };
        let mut entries = BTreeMap::new();
        entries.insert(
            SOFT_TISSUE,
            ("soft tissue".into(), tissue(1.63, 0.54, 0.5, 0.25, 0.6)),
        );
        entries.insert(FLUID, ("fluid".into(), tissue(1.52, 0.002, 0.0, 0.0, 0.0)));
        entries.insert(BONE, ("bone".into(), tissue(7.8, 20.0, 1.5, 0.5, 0.9)));
        entries.insert(ORGAN, ("organ".into(), tissue(1.66, 0.6, 0.8, 0.4, 0.7)));
        entries.insert(FAT, ("fat".into(), tissue(1.38, 0.48, 0.25, 0.15, 0.4)));
        PropertyTable { entries }
    }
}

impl Default for PropertyTable {
    fn default() -> Self {
        default_property_table()
    }
}

/// Default tissue table for the default (desk-scale, 8 MHz) geometry.
pub fn default_property_table() -> PropertyTable {
    PropertyTable::for_geometry(&BeamGeometry::default())
}

/// Parametric inclusion outline in beam coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Axis-aligned ellipse in (angle, depth).
    Ellipse {
        center_deg: f64,
        center_cm: f64,
        half_width_deg: f64,
        half_depth_cm: f64,
    },
    /// Depth band `[top_cm, bottom_cm]`, optionally limited to an angular range.
    Band {
        top_cm: f64,
        bottom_cm: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left_deg: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right_deg: Option<f64>,
    },
}

impl Shape {
    pub fn contains(&self, angle_deg: f64, depth_cm: f64) -> bool {
        match *self {
            Shape::Ellipse {
                center_deg,
                center_cm,
                half_width_deg,
                half_depth_cm,
            } => {
                let u = (angle_deg - center_deg) / half_width_deg;
                let v = (depth_cm - center_cm) / half_depth_cm;
                u * u + v * v <= 1.0
            }
            Shape::Band {
                top_cm,
                bottom_cm,
                left_deg,
                right_deg,
            } => {
                depth_cm >= top_cm
                    && depth_cm <= bottom_cm
                    && left_deg.is_none_or(|l| angle_deg >= l)
                    && right_deg.is_none_or(|r| angle_deg <= r)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Ellipse {
                center_deg,
                center_cm,
                half_width_deg,
                half_depth_cm,
            } => {
                center_deg.is_finite()
                    && center_cm.is_finite()
                    && half_width_deg > 0.0
                    && half_depth_cm > 0.0
            }
            Shape::Band {
                top_cm, bottom_cm, ..
            } => top_cm.is_finite() && bottom_cm.is_finite() && top_cm <= bottom_cm,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate inclusion shape {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inclusion {
    pub label: Label,
    pub shape: Shape,
}

/// Phantom description; loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    #[serde(default)]
    pub background_label: Label,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
    /// Seed the inclusion list was drawn from (0 for hand-written phantoms).
    #[serde(default)]
    pub rng_seed: u64,
    /// Tissue table; defaults to [`PropertyTable::for_geometry`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissues: Option<PropertyTable>,
}

impl PhantomSpec {
    pub fn homogeneous(background_label: Label) -> Self {
        PhantomSpec {
            background_label,
            inclusions: Vec::new(),
            rng_seed: 0,
            tissues: None,
        }
    }

    pub fn with_inclusion(mut self, label: Label, shape: Shape) -> Self {
        self.inclusions.push(Inclusion { label, shape });
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml {
            path: "<string>".into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("phantom spec is always representable")
    }

    /// Shipped demonstration phantom: a bony plate above soft tissue with a
    /// fluid pocket, casting a shadow through the centre of the sector.
    pub fn bone_demo() -> Self {
        PhantomSpec::homogeneous(SOFT_TISSUE)
            .with_inclusion(
                FAT,
                Shape::Band {
                    top_cm: 0.3,
                    bottom_cm: 1.0,
                    left_deg: None,
                    right_deg: None,
                },
            )
            .with_inclusion(
                FLUID,
                Shape::Ellipse {
                    center_deg: -20.0,
                    center_cm: 9.0,
                    half_width_deg: 8.0,
                    half_depth_cm: 1.2,
                },
            )
            .with_inclusion(
                BONE,
                Shape::Ellipse {
                    center_deg: 0.0,
                    center_cm: 5.0,
                    half_width_deg: 8.0,
                    half_depth_cm: 0.4,
                },
            )
    }

    /// Random fetal-exam-like cross-section: optional fat layer, a fluid sac,
    /// one or two organs and at least one bone, placed relative to the
    /// geometry's depth and sector.
    pub fn procedural(seed: u64, geometry: &BeamGeometry) -> Self {
        let mut rng = rng::stream(&[rng::DOMAIN_PHANTOM, seed]);
        let depth = geometry.depth_cm;
        let half_fov = geometry.fov_deg / 2.0;
        let mut spec = PhantomSpec::homogeneous(SOFT_TISSUE);
        spec.rng_seed = seed;

        if rng.random_bool(0.7) {
            let top = depth * rng.random_range(0.02..0.05);
            spec = spec.with_inclusion(
                FAT,
                Shape::Band {
                    top_cm: top,
                    bottom_cm: top + depth * rng.random_range(0.03..0.07),
                    left_deg: None,
                    right_deg: None,
                },
            );
        }
        if rng.random_bool(0.8) {
            spec = spec.with_inclusion(
                FLUID,
                Shape::Ellipse {
                    center_deg: half_fov * rng.random_range(-0.5..0.5),
                    center_cm: depth * rng.random_range(0.35..0.65),
                    half_width_deg: half_fov * rng.random_range(0.3..0.7),
                    half_depth_cm: depth * rng.random_range(0.05..0.12),
                },
            );
        }
        for _ in 0..rng.random_range(1..=2) {
            spec = spec.with_inclusion(
                ORGAN,
                Shape::Ellipse {
                    center_deg: half_fov * rng.random_range(-0.7..0.7),
                    center_cm: depth * rng.random_range(0.25..0.8),
                    half_width_deg: half_fov * rng.random_range(0.15..0.35),
                    half_depth_cm: depth * rng.random_range(0.06..0.15),
                },
            );
        }
        for _ in 0..rng.random_range(1..=2) {
            spec = spec.with_inclusion(
                BONE,
                Shape::Ellipse {
                    center_deg: half_fov * rng.random_range(-0.7..0.7),
                    center_cm: depth * rng.random_range(0.25..0.65),
                    half_width_deg: half_fov * rng.random_range(0.08..0.22),
                    half_depth_cm: depth * rng.random_range(0.017..0.033),
                },
            );
        }
        spec
    }

    /// Property table in effect for `geometry`.
    pub fn resolve_tissues(&self, geometry: &BeamGeometry) -> PropertyTable {
        self.tissues
            .clone()
            .unwrap_or_else(|| PropertyTable::for_geometry(geometry))
    }
}

/// Tissue label grid on the beam grid, with its property table. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMap {
    labels: Array2<Label>,
    properties: PropertyTable,
    geometry: BeamGeometry,
    background: Label,
}

impl TissueMap {
    /// Validates that every label has properties and the grid matches the
    /// geometry (scanlines × axial samples).
    pub fn new(
        labels: Array2<Label>,
        properties: PropertyTable,
        geometry: BeamGeometry,
        background: Label,
    ) -> Result<Self> {
        geometry.validate()?;
        let expected = (geometry.scanline_count, geometry.axial_samples);
        if labels.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: labels.dim(),
            });
        }
        for (l, p) in properties.iter() {
            p.validate(l)?;
        }
        if !properties.contains(background) {
            return Err(Error::UnknownLabel { label: background });
        }
        if let Some(&l) = labels.iter().find(|&&l| !properties.contains(l)) {
            return Err(Error::UnknownLabel { label: l });
        }
        Ok(TissueMap {
            labels,
            properties,
            geometry,
            background,
        })
    }

    pub fn labels(&self) -> &Array2<Label> {
        &self.labels
    }

    pub fn properties(&self) -> &PropertyTable {
        &self.properties
    }

    pub fn geometry(&self) -> &BeamGeometry {
        &self.geometry
    }

    pub fn background(&self) -> Label {
        self.background
    }

    pub fn background_properties(&self) -> &TissueProperties {
        self.properties
            .get(self.background)
            .expect("validated at construction")
    }

    pub fn label(&self, scanline: usize, sample: usize) -> Label {
        self.labels[[scanline, sample]]
    }

    /// Per-cell attenuation constant.
    pub fn mu(&self) -> Array2<f64> {
        let mu = self.properties.lookup(|p| p.attenuation_mu);
        self.labels.mapv(|l| mu[l as usize])
    }

    /// Labels present in the grid, ascending.
    pub fn present_labels(&self) -> Vec<Label> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    /// Cell count per label.
    pub fn histogram(&self) -> BTreeMap<Label, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }
}

/// Rasterizes `spec` onto the beam grid of `geometry`.
///
/// Cell `(s, z)` is tested at its centre: angle
/// `-fov/2 + (s + 0.5) * fov / scanlines`, depth `(z + 0.5) * depth / samples`.
pub fn generate_phantom(spec: &PhantomSpec, geometry: &BeamGeometry) -> Result<TissueMap> {
    geometry.validate()?;
    let properties = spec.resolve_tissues(geometry);
    if !properties.contains(spec.background_label) {
        return Err(Error::UnknownLabel {
            label: spec.background_label,
        });
    }
    for inc in &spec.inclusions {
        if !properties.contains(inc.label) {
            return Err(Error::UnknownLabel { label: inc.label });
        }
        inc.shape.validate()?;
    }

    let (ns, nz) = (geometry.scanline_count, geometry.axial_samples);
    let mut labels = Array2::from_elem((ns, nz), spec.background_label);
    for inc in &spec.inclusions {
        for s in 0..ns {
            let angle = geometry.scanline_angle_deg(s);
            for z in 0..nz {
                if inc.shape.contains(angle, geometry.sample_depth_cm(z)) {
                    labels[[s, z]] = inc.label;
                }
            }
        }
    }
    TissueMap::new(labels, properties, *geometry, spec.background_label)
}
