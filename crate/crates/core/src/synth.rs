//! Deterministic synthetic-cohort generator: ellipsoidal brain-structure
//! stand-ins with class-scaled sizes (atrophy analog) and class-scaled
//! intensity noise (texture analog), plus class-shifted tabular columns
//! and MMSE sub-scores.
//!
//! Everything derives from ChaCha8 streams seeded through
//! [`crate::derive_seed`]; identical spec + seed produces byte-identical
//! files. Gaussian draws use the Box-Muller transform (two uniform draws
//! per sample), which is part of the reproducibility contract documented
//! in `docs/file_formats.md`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::sha256_hex;
use crate::tabular::{Cell, Cohort, CohortSchema, ColumnKind, Diagnosis, PatientRecord};
use crate::volume::{write_raw_mask, write_raw_volume, LabelMask, Volume3D};

const SALT_PATIENT: u64 = 0x50415449; // "PATI"
const SALT_SCAN: u64 = 0x5343414e; // "SCAN"

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub ad: T,
    pub vad: T,
    pub mci: T,
    pub ctl: T,
}

impl<T> PerClass<T> {
    pub fn get(&self, d: Diagnosis) -> &T {
        match d {
            Diagnosis::Ad => &self.ad,
            Diagnosis::Vad => &self.vad,
            Diagnosis::Mci => &self.mci,
            Diagnosis::Ctl => &self.ctl,
        }
    }

    pub fn uniform(value: T) -> Self
    where
        T: Clone,
    {
        PerClass { ad: value.clone(), vad: value.clone(), mci: value.clone(), ctl: value }
    }
}

/// Structure-size and texture-noise multipliers for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEffect {
    pub size_mult: f64,
    pub noise_mult: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_patients: PerClass<usize>,
    pub visits: Vec<i32>,
    pub grid_size: usize,
    pub n_structures: usize,
    pub class_effect: PerClass<ClassEffect>,
    /// Mean shifts for (age, education_years, systolic_bp).
    pub tabular_effect: PerClass<[f64; 3]>,
    /// Shifts for (mmse_memory, mmse_processing).
    pub mmse_effect: PerClass<(f64, f64)>,
    /// Extra probability mass on the risk allele.
    pub genotype_effect: PerClass<f64>,
    pub missing_rate: f64,
    /// Per-visit decay of treated patients' class effect toward CTL.
    pub treatment_drift: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_patients.ad, self.n_patients.vad, self.n_patients.mci, self.n_patients.ctl];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidSpec("every class needs at least one patient".into()));
        }
        for d in Diagnosis::ALL {
            let e = self.class_effect.get(d);
            if e.size_mult <= 0.0 || e.noise_mult <= 0.0 {
                return Err(Error::InvalidSpec(format!("non-positive multiplier for {d}")));
            }
        }
        if self.visits.is_empty() || self.visits.iter().any(|v| !crate::tabular::VISIT_MONTHS.contains(v)) {
            return Err(Error::InvalidSpec(format!("visits {:?} must be a non-empty subset of {:?}", self.visits, crate::tabular::VISIT_MONTHS)));
        }
        if self.grid_size < 8 {
            return Err(Error::InvalidSpec("grid_size must be at least 8".into()));
        }
        if self.n_structures == 0 {
            return Err(Error::InvalidSpec("n_structures must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidSpec("missing_rate must lie in [0, 1)".into()));
        }
        if self.treatment_drift < 0.0 {
            return Err(Error::InvalidSpec("treatment_drift must be non-negative".into()));
        }
        Ok(())
    }

    /// Pinned strong-separation preset used by the end-to-end gates.
    pub fn strong_separation(seed: u64) -> Self {
        SynthSpec {
            n_patients: PerClass::uniform(20),
            visits: vec![0, 3, 12],
            grid_size: 24,
            n_structures: 4,
            class_effect: PerClass {
                ad: ClassEffect { size_mult: 0.68, noise_mult: 1.0 },
                vad: ClassEffect { size_mult: 0.94, noise_mult: 2.6 },
                mci: ClassEffect { size_mult: 0.86, noise_mult: 1.4 },
                ctl: ClassEffect { size_mult: 1.0, noise_mult: 1.0 },
            },
            tabular_effect: PerClass {
                ad: [5.0, -2.0, 0.0],
                vad: [3.0, 0.0, 20.0],
                mci: [2.0, -1.0, 5.0],
                ctl: [0.0, 0.0, 0.0],
            },
            mmse_effect: PerClass {
                ad: (-3.5, -6.0),
                vad: (-1.0, -9.0),
                mci: (-1.5, -3.0),
                ctl: (0.0, 0.0),
            },
            genotype_effect: PerClass { ad: 0.45, vad: 0.10, mci: 0.15, ctl: 0.0 },
            missing_rate: 0.03,
            treatment_drift: 1.0,
            seed,
        }
    }

    /// Null preset: all class effects removed, so classes are
    /// statistically indistinguishable and downstream accuracy must sit
    /// in the chance band.
    pub fn null_spec(seed: u64) -> Self {
        SynthSpec {
            class_effect: PerClass::uniform(ClassEffect { size_mult: 1.0, noise_mult: 1.0 }),
            tabular_effect: PerClass::uniform([0.0, 0.0, 0.0]),
            mmse_effect: PerClass::uniform((0.0, 0.0)),
            genotype_effect: PerClass::uniform(0.0),
            treatment_drift: 0.0,
            ..SynthSpec::strong_separation(seed)
        }
    }
}

/// Box-Muller standard normal; consumes exactly two uniform draws.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientManifest {
    pub patient_id: String,
    pub diagnosis: String,
    /// "treated" or "control" for treatment-pair cohorts.
    pub arm: Option<String>,
    pub size_mult: f64,
    pub noise_mult: f64,
    /// Per-visit interpolation toward CTL (0 = untouched class effect).
    pub alphas: Vec<(i32, f64)>,
    /// True when the month-12 effect has drifted toward CTL, so a
    /// perfect classifier must show a probability decrease.
    pub expected_decrease: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub patients: Vec<PatientManifest>,
    /// Relative path -> SHA-256 of every generated file.
    pub files: BTreeMap<String, String>,
}

struct StructureLayout {
    /// Per structure: center (x,y,z) and radii (rx,ry,rz) in voxels.
    ellipsoids: Vec<([f64; 3], [f64; 3])>,
}

fn layout_structures(grid: usize, n: usize) -> StructureLayout {
    let g = grid as f64;
    let lx = (n as f64).cbrt().ceil() as usize;
    let rem = n.div_ceil(lx);
    let ly = (rem as f64).sqrt().ceil() as usize;
    let lz = rem.div_ceil(ly);
    let cell = [g / lx as f64, g / ly as f64, g / lz as f64];
    let base = 0.30 * cell.iter().cloned().fold(f64::INFINITY, f64::min);
    let aniso = [0.85, 1.0, 1.15];
    let mut ellipsoids = Vec::with_capacity(n);
    for s in 0..n {
        let ci = s % lx;
        let cj = (s / lx) % ly;
        let ck = s / (lx * ly);
        let center = [
            (ci as f64 + 0.5) * cell[0],
            (cj as f64 + 0.5) * cell[1],
            (ck as f64 + 0.5) * cell[2],
        ];
        // Mild per-structure size variation keeps structures
        // distinguishable in shape space.
        let scale = base * (0.9 + 0.05 * (s % 3) as f64);
        let radii = [scale * aniso[0], scale * aniso[1], scale * aniso[2]];
        ellipsoids.push((center, radii));
    }
    StructureLayout { ellipsoids }
}

/// One scan: the volume and its label mask.
fn generate_scan(
    spec: &SynthSpec,
    layout: &StructureLayout,
    size_mult: f64,
    noise_mult: f64,
    rng: &mut ChaCha8Rng,
) -> (Volume3D, LabelMask) {
    let g = spec.grid_size;
    let mut data = vec![0.0f64; g * g * g];
    let mut labels = vec![0u32; g * g * g];
    for k in 0..g {
        for j in 0..g {
            for i in 0..g {
                let idx = i + g * (j + g * k);
                let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
                let mut label = 0u32;
                for (s, (center, radii)) in layout.ellipsoids.iter().enumerate() {
                    let mut q = 0.0;
                    for t in 0..3 {
                        let r = radii[t] * size_mult;
                        let d = (p[t] - center[t]) / r;
                        q += d * d;
                    }
                    if q <= 1.0 {
                        label = (s + 1) as u32;
                        break;
                    }
                }
                labels[idx] = label;
                data[idx] = if label == 0 {
                    20.0 + 2.0 * normal(rng)
                } else {
                    100.0 + 12.0 * (label as f64) + 5.0 * noise_mult * normal(rng)
                };
            }
        }
    }
    let vol = Volume3D::new((g, g, g), (1.0, 1.0, 1.0), data).expect("valid synthetic volume");
    let mask = LabelMask::new((g, g, g), labels).expect("valid synthetic mask");
    (vol, mask)
}

/// Linear interpolation of class effects toward CTL by `alpha`.
fn effect_toward_ctl(spec: &SynthSpec, from: Diagnosis, alpha: f64) -> (ClassEffect, [f64; 3], (f64, f64), f64) {
    let lerp = |a: f64, b: f64| a + (b - a) * alpha;
    let ce_from = spec.class_effect.get(from);
    let ce_to = spec.class_effect.get(Diagnosis::Ctl);
    let te_from = spec.tabular_effect.get(from);
    let te_to = spec.tabular_effect.get(Diagnosis::Ctl);
    let me_from = spec.mmse_effect.get(from);
    let me_to = spec.mmse_effect.get(Diagnosis::Ctl);
    let ge_from = spec.genotype_effect.get(from);
    let ge_to = spec.genotype_effect.get(Diagnosis::Ctl);
    (
        ClassEffect {
            size_mult: lerp(ce_from.size_mult, ce_to.size_mult),
            noise_mult: lerp(ce_from.noise_mult, ce_to.noise_mult),
        },
        [
            lerp(te_from[0], te_to[0]),
            lerp(te_from[1], te_to[1]),
            lerp(te_from[2], te_to[2]),
        ],
        (lerp(me_from.0, me_to.0), lerp(me_from.1, me_to.1)),
        lerp(*ge_from, *ge_to),
    )
}

fn clinical_schema() -> CohortSchema {
    let mut columns = BTreeMap::new();
    columns.insert("age".to_string(), ColumnKind::Continuous);
    columns.insert("education_years".to_string(), ColumnKind::Continuous);
    columns.insert("systolic_bp".to_string(), ColumnKind::Continuous);
    columns.insert("apoe".to_string(), ColumnKind::Categorical);
    CohortSchema { columns, genotype: vec!["apoe".to_string()] }
}

fn sample_apoe(rng: &mut ChaCha8Rng, risk_shift: f64) -> String {
    let p_e4 = (0.25 + risk_shift).clamp(0.0, 0.9);
    let p_e3 = (1.0 - p_e4) * 0.85;
    let u: f64 = rng.random_range(0.0..1.0);
    if u < p_e4 {
        "e4".to_string()
    } else if u < p_e4 + p_e3 {
        "e3".to_string()
    } else {
        "e2".to_string()
    }
}

fn maybe_missing(rng: &mut ChaCha8Rng, rate: f64, cell: Cell) -> Cell {
    if rng.random_range(0.0..1.0) < rate {
        Cell::Missing
    } else {
        cell
    }
}

struct GeneratedPatient {
    records: Vec<PatientRecord>,
    manifest: PatientManifest,
    /// (file stem, visit month, volume, mask)
    scans: Vec<(String, i32, Volume3D, LabelMask)>,
}

/// Visit progress along the 0/3/12-month schedule: 0, 0.5, 1.
fn visit_fraction(visit: i32) -> f64 {
    match visit {
        0 => 0.0,
        3 => 0.5,
        _ => 1.0,
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_patient(
    spec: &SynthSpec,
    layout: &StructureLayout,
    patient_id: &str,
    diagnosis: Diagnosis,
    arm: Option<&str>,
    drift: f64,
    global_index: u64,
) -> GeneratedPatient {
    let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SALT_PATIENT ^ global_index));
    let size_jitter = 1.0 + 0.03 * normal(&mut prng);
    let noise_jitter = (1.0 + 0.05 * normal(&mut prng)).max(0.1);
    let age_base = 70.0 + 4.0 * normal(&mut prng);
    let edu_base = 12.0 + 2.5 * normal(&mut prng);

    let mut records = Vec::new();
    let mut scans = Vec::new();
    let mut alphas = Vec::new();
    for (vi, &visit) in spec.visits.iter().enumerate() {
        let alpha = (drift * visit_fraction(visit)).clamp(0.0, 1.0);
        alphas.push((visit, alpha));
        let (ce, te, me, ge) = effect_toward_ctl(spec, diagnosis, alpha);
        let mut srng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SALT_SCAN ^ (global_index << 8) ^ vi as u64));
        let size_mult = (ce.size_mult * size_jitter).max(0.1);
        let noise_mult = (ce.noise_mult * noise_jitter).max(0.05);
        let (vol, mask) = generate_scan(spec, layout, size_mult, noise_mult, &mut srng);
        scans.push((format!("{patient_id}_m{visit}"), visit, vol, mask));

        let age = age_base + te[0];
        let edu = (edu_base + te[1]).max(0.0);
        let bp = 135.0 + te[2] + 8.0 * normal(&mut srng);
        let apoe = sample_apoe(&mut srng, ge);
        let mem = (5.0 + me.0 + 0.8 * normal(&mut srng)).round().clamp(0.0, 6.0);
        let proc = (20.0 + me.1 + 2.0 * normal(&mut srng)).round().clamp(0.0, 24.0);
        let rate = spec.missing_rate;
        records.push(PatientRecord {
            patient_id: patient_id.to_string(),
            visit_month: visit,
            diagnosis,
            clinical: vec![
                ("age".into(), maybe_missing(&mut srng, rate, Cell::Num(age))),
                ("education_years".into(), maybe_missing(&mut srng, rate, Cell::Num(edu))),
                ("systolic_bp".into(), maybe_missing(&mut srng, rate, Cell::Num(bp))),
            ],
            genotype: vec![("apoe".into(), maybe_missing(&mut srng, rate, Cell::Cat(apoe)))],
            mmse_memory: Some(mem),
            mmse_processing: Some(proc),
        });
    }
    let last_alpha = alphas.iter().map(|&(_, a)| a).fold(0.0, f64::max);
    GeneratedPatient {
        records,
        manifest: PatientManifest {
            patient_id: patient_id.to_string(),
            diagnosis: diagnosis.as_str().to_string(),
            arm: arm.map(|s| s.to_string()),
            size_mult: size_jitter,
            noise_mult: noise_jitter,
            alphas,
            expected_decrease: last_alpha > 0.0,
        },
        scans,
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_sub_cohort(
    root: &Path,
    out_dir: &Path,
    patients: Vec<GeneratedPatient>,
    files: &mut BTreeMap<String, String>,
    manifest_patients: &mut Vec<PatientManifest>,
) -> Result<()> {
    let volumes = out_dir.join("volumes");
    let masks = out_dir.join("masks");
    mkdir(&volumes)?;
    mkdir(&masks)?;
    let register = |files: &mut BTreeMap<String, String>, path: &Path| -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        files.insert(rel.to_string_lossy().into_owned(), sha256_hex(&bytes));
        Ok(())
    };
    let mut records = Vec::new();
    for p in patients {
        for (stem, _visit, vol, mask) in &p.scans {
            let vp = write_raw_volume(vol, &volumes, stem)?;
            let mp = write_raw_mask(mask, &masks, stem)?;
            for path in [&vp, &vp.with_extension("bin"), &mp, &mp.with_extension("bin")] {
                register(files, path)?;
            }
        }
        records.extend(p.records);
        manifest_patients.push(p.manifest);
    }
    records.sort_by(|a, b| (a.patient_id.clone(), a.visit_month).cmp(&(b.patient_id.clone(), b.visit_month)));
    let cohort = Cohort {
        records,
        schema: clinical_schema(),
        column_order: vec!["age".into(), "education_years".into(), "systolic_bp".into(), "apoe".into()],
    };
    let csv_path = out_dir.join("cohort.csv");
    let schema_path = out_dir.join("cohort.schema.json");
    crate::tabular::write_cohort_csv(&cohort, &csv_path, &schema_path)?;
    register(files, &csv_path)?;
    register(files, &schema_path)?;
    Ok(())
}

/// Generate a full four-class cohort under `out_dir`: `volumes/`,
/// `masks/`, `cohort.csv`, `cohort.schema.json`, and `manifest.json`.
pub fn generate_cohort(spec: &SynthSpec, out_dir: &Path) -> Result<SynthManifest> {
    spec.validate()?;
    mkdir(out_dir)?;
    let layout = layout_structures(spec.grid_size, spec.n_structures);
    let mut files = BTreeMap::new();
    let mut manifest_patients = Vec::new();
    let mut patients = Vec::new();
    let mut global_index = 0u64;
    for diagnosis in Diagnosis::ALL {
        let n = *spec.n_patients.get(diagnosis);
        for t in 0..n {
            let pid = format!("{}{t:03}", diagnosis.as_str().to_lowercase());
            patients.push(generate_patient(spec, &layout, &pid, diagnosis, None, 0.0, global_index));
            global_index += 1;
        }
    }
    write_sub_cohort(out_dir, out_dir, patients, &mut files, &mut manifest_patients)?;
    let manifest = SynthManifest { spec: spec.clone(), patients: manifest_patients, files };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(manifest)
}

/// Generate treated and control MCI sub-cohorts under `out_dir/treated`
/// and `out_dir/control`. Treated patients' class effect decays toward
/// CTL by `treatment_drift` per visit; controls stay fixed. The manifest
/// records which patients must show a probability decrease under a
/// perfect classifier.
pub fn generate_treated_pair(spec: &SynthSpec, out_dir: &Path) -> Result<SynthManifest> {
    spec.validate()?;
    for required in crate::tabular::VISIT_MONTHS {
        if !spec.visits.contains(&required) {
            return Err(Error::InvalidSpec(format!(
                "treated pair needs visits {:?}, got {:?}",
                crate::tabular::VISIT_MONTHS,
                spec.visits
            )));
        }
    }
    mkdir(out_dir)?;
    let layout = layout_structures(spec.grid_size, spec.n_structures);
    let n = spec.n_patients.mci;
    let mut files = BTreeMap::new();
    let mut manifest_patients = Vec::new();

    let mut treated = Vec::new();
    let mut control = Vec::new();
    for t in 0..n {
        // Distinct stream offsets keep arms independent.
        treated.push(generate_patient(
            spec,
            &layout,
            &format!("trt{t:03}"),
            Diagnosis::Mci,
            Some("treated"),
            spec.treatment_drift,
            1_000_000 + t as u64,
        ));
        control.push(generate_patient(
            spec,
            &layout,
            &format!("con{t:03}"),
            Diagnosis::Mci,
            Some("control"),
            0.0,
            2_000_000 + t as u64,
        ));
    }
    write_sub_cohort(out_dir, &out_dir.join("treated"), treated, &mut files, &mut manifest_patients)?;
    write_sub_cohort(out_dir, &out_dir.join("control"), control, &mut files, &mut manifest_patients)?;
    let manifest = SynthManifest { spec: spec.clone(), patients: manifest_patients, files };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(manifest)
}
