//! Multi-omics cohort modelling: fuse radiomics fragments with
//! clinical/genetic/cognitive columns, then encode, scale, and impute.
//!
//! Cohort CSVs carry the required columns `patient_id`, `visit_month`,
//! `diagnosis` plus arbitrary feature columns whose kinds are declared in
//! a JSON schema sidecar (see `docs/file_formats.md`). Empty cells are
//! missing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiomics::RadiomicsFragment;

pub const VISIT_MONTHS: [i32; 3] = [0, 3, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    Ad,
    Vad,
    Mci,
    Ctl,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 4] = [Diagnosis::Ad, Diagnosis::Vad, Diagnosis::Mci, Diagnosis::Ctl];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "AD" => Ok(Diagnosis::Ad),
            "VaD" => Ok(Diagnosis::Vad),
            "MCI" => Ok(Diagnosis::Mci),
            "CTL" => Ok(Diagnosis::Ctl),
            other => Err(Error::UnknownDiagnosis(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Ad => "AD",
            Diagnosis::Vad => "VaD",
            Diagnosis::Mci => "MCI",
            Diagnosis::Ctl => "CTL",
        }
    }
}

impl std::fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// One cohort row: a patient at one visit.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub visit_month: i32,
    pub diagnosis: Diagnosis,
    /// Clinical feature cells in schema column order.
    pub clinical: Vec<(String, Cell)>,
    /// Genotype (categorical) cells in schema column order.
    pub genotype: Vec<(String, Cell)>,
    pub mmse_memory: Option<f64>,
    pub mmse_processing: Option<f64>,
}

// ---------------------------------------------------------------------------
// MMSE sub-score split
// ---------------------------------------------------------------------------

/// 0-based indices of the 3 registration + 3 recall items in the
/// canonical 30-item ordering (documented in `docs/mmse_items.md`).
pub const MMSE_MEMORY_ITEMS: [usize; 6] = [10, 11, 12, 18, 19, 20];

/// Split 30 binary item marks into (memory, processing) sub-scores:
/// memory = registration + recall (6 points), processing = the rest (24).
pub fn split_mmse(item_scores: &[u8]) -> Result<(u8, u8)> {
    if item_scores.len() != 30 {
        return Err(Error::WrongItemCount(item_scores.len()));
    }
    if item_scores.iter().any(|&v| v > 1) {
        return Err(Error::InvalidCohort("MMSE item marks must be 0 or 1".into()));
    }
    let memory: u8 = MMSE_MEMORY_ITEMS.iter().map(|&i| item_scores[i]).sum();
    let processing: u8 = item_scores.iter().sum::<u8>() - memory;
    Ok((memory, processing))
}

// ---------------------------------------------------------------------------
// Cohort CSV + schema sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSchema {
    /// Feature column kinds, keyed by column name.
    pub columns: BTreeMap<String, ColumnKind>,
    /// Subset of `columns` holding genotype data (must be categorical).
    #[serde(default)]
    pub genotype: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub schema: CohortSchema,
    /// Feature column order as it appeared in the CSV header.
    pub column_order: Vec<String>,
}

const REQUIRED_COLUMNS: [&str; 3] = ["patient_id", "visit_month", "diagnosis"];
const MMSE_COLUMNS: [&str; 2] = ["mmse_memory", "mmse_processing"];

pub fn load_cohort(csv_path: &Path, schema_path: &Path) -> Result<Cohort> {
    let schema: CohortSchema = serde_json::from_slice(
        &std::fs::read(schema_path).map_err(|e| Error::io(schema_path.display().to_string(), e))?,
    )?;
    for g in &schema.genotype {
        match schema.columns.get(g) {
            Some(ColumnKind::Categorical) => {}
            _ => return Err(Error::InvalidCohort(format!("genotype column {g} must be declared categorical"))),
        }
    }
    let mut reader = csv::Reader::from_path(csv_path).map_err(Error::from)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    for req in REQUIRED_COLUMNS {
        if !header.iter().any(|h| h == req) {
            return Err(Error::InvalidCohort(format!("missing required column {req}")));
        }
    }
    let col_idx = |name: &str| header.iter().position(|h| h == name);
    let feature_cols: Vec<String> = header
        .iter()
        .filter(|h| !REQUIRED_COLUMNS.contains(&h.as_str()) && !MMSE_COLUMNS.contains(&h.as_str()))
        .cloned()
        .collect();
    for c in &feature_cols {
        if !schema.columns.contains_key(c) {
            return Err(Error::InvalidCohort(format!("column {c} not declared in schema")));
        }
    }

    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, i32)> = BTreeSet::new();
    let mut diag_by_patient: BTreeMap<String, Diagnosis> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let patient_id = rec[col_idx("patient_id").unwrap()].to_string();
        let visit_month: i32 = rec[col_idx("visit_month").unwrap()]
            .parse()
            .map_err(|_| Error::InvalidCohort(format!("bad visit_month for {patient_id}")))?;
        if !VISIT_MONTHS.contains(&visit_month) {
            return Err(Error::InvalidCohort(format!(
                "visit_month {visit_month} for {patient_id} not in {VISIT_MONTHS:?}"
            )));
        }
        let diagnosis = Diagnosis::parse(&rec[col_idx("diagnosis").unwrap()])?;
        if let Some(prev) = diag_by_patient.insert(patient_id.clone(), diagnosis) {
            if prev != diagnosis {
                return Err(Error::InconsistentDiagnosis(patient_id));
            }
        }
        if !seen.insert((patient_id.clone(), visit_month)) {
            return Err(Error::InvalidCohort(format!("duplicate row for {patient_id} month {visit_month}")));
        }

        let parse_cell = |name: &str| -> Result<Cell> {
            let idx = col_idx(name).unwrap();
            let raw = rec[idx].trim();
            if raw.is_empty() {
                return Ok(Cell::Missing);
            }
            match schema.columns[name] {
                ColumnKind::Continuous => raw
                    .parse::<f64>()
                    .map(Cell::Num)
                    .map_err(|_| Error::InvalidCohort(format!("non-numeric value {raw:?} in column {name}"))),
                ColumnKind::Categorical => Ok(Cell::Cat(raw.to_string())),
            }
        };
        let mut clinical = Vec::new();
        let mut genotype = Vec::new();
        for name in &feature_cols {
            let cell = parse_cell(name)?;
            if schema.genotype.contains(name) {
                genotype.push((name.clone(), cell));
            } else {
                clinical.push((name.clone(), cell));
            }
        }
        let parse_mmse = |name: &str, max: f64| -> Result<Option<f64>> {
            match col_idx(name) {
                None => Ok(None),
                Some(idx) => {
                    let raw = rec[idx].trim();
                    if raw.is_empty() {
                        return Ok(None);
                    }
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| Error::InvalidCohort(format!("non-numeric {name} {raw:?}")))?;
                    if !(0.0..=max).contains(&v) || v.fract() != 0.0 {
                        return Err(Error::InvalidCohort(format!("{name} {v} out of range 0..={max}")));
                    }
                    Ok(Some(v))
                }
            }
        };
        let mmse_memory = parse_mmse("mmse_memory", 6.0)?;
        let mmse_processing = parse_mmse("mmse_processing", 24.0)?;
        if let (Some(m), Some(p)) = (mmse_memory, mmse_processing) {
            if m + p > 30.0 {
                return Err(Error::InvalidCohort(format!("MMSE sub-scores {m}+{p} exceed 30 for {patient_id}")));
            }
        }
        records.push(PatientRecord {
            patient_id,
            visit_month,
            diagnosis,
            clinical,
            genotype,
            mmse_memory,
            mmse_processing,
        });
    }
    records.sort_by(|a, b| (a.patient_id.clone(), a.visit_month).cmp(&(b.patient_id.clone(), b.visit_month)));
    Ok(Cohort { records, schema, column_order: feature_cols })
}

pub fn write_cohort_csv(cohort: &Cohort, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path).map_err(Error::from)?;
    let mut header: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(MMSE_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(cohort.column_order.iter().cloned());
    w.write_record(&header)?;
    for r in &cohort.records {
        let mut rec = vec![r.patient_id.clone(), r.visit_month.to_string(), r.diagnosis.as_str().to_string()];
        rec.push(r.mmse_memory.map(|v| format!("{v}")).unwrap_or_default());
        rec.push(r.mmse_processing.map(|v| format!("{v}")).unwrap_or_default());
        let all: BTreeMap<&str, &Cell> = r
            .clinical
            .iter()
            .chain(r.genotype.iter())
            .map(|(n, c)| (n.as_str(), c))
            .collect();
        for name in &cohort.column_order {
            let cell = all.get(name.as_str()).copied().unwrap_or(&Cell::Missing);
            rec.push(match cell {
                Cell::Num(v) => format!("{v}"),
                Cell::Cat(s) => s.clone(),
                Cell::Missing => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    std::fs::write(schema_path, serde_json::to_vec_pretty(&cohort.schema)?)
        .map_err(|e| Error::io(schema_path.display().to_string(), e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

/// Radiomics column naming: `s<label>_<feature>` with an optional
/// `_m<visit>` suffix in wide layouts.
pub fn radiomics_column(label: u32, feature: &str, visit: Option<i32>) -> String {
    match visit {
        Some(m) => format!("s{label}_{feature}_m{m}"),
        None => format!("s{label}_{feature}"),
    }
}

/// Parse a radiomics column name back into (label, feature, visit).
/// Returns None for non-radiomics columns.
pub fn parse_radiomics_column(name: &str) -> Option<(u32, &str, Option<i32>)> {
    let rest = name.strip_prefix('s')?;
    let us = rest.find('_')?;
    if us == 0 {
        return None;
    }
    let label: u32 = rest[..us].parse().ok()?;
    let feature_part = &rest[us + 1..];
    if feature_part.is_empty() {
        return None;
    }
    for m in VISIT_MONTHS {
        if let Some(feature) = feature_part.strip_suffix(&format!("_m{m}")) {
            if !feature.is_empty() {
                return Some((label, feature, Some(m)));
            }
        }
    }
    Some((label, feature_part, None))
}

pub fn is_radiomics_column(name: &str) -> bool {
    parse_radiomics_column(name).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuseLayout {
    /// One row per (patient, visit); radiomics columns unsuffixed.
    PerVisit,
    /// One row per patient; radiomics columns suffixed `_m<visit>` for
    /// each listed visit, missing visits left missing.
    Wide(Vec<i32>),
}

impl FuseLayout {
    pub fn wide_all_visits() -> Self {
        FuseLayout::Wide(VISIT_MONTHS.to_vec())
    }
}

/// A fragment keyed to its scan.
#[derive(Debug, Clone)]
pub struct KeyedFragment {
    pub patient_id: String,
    pub visit_month: i32,
    pub fragment: RadiomicsFragment,
}

/// The fused feature table: ordered feature columns plus per-row label
/// (diagnosis) and group (patient) metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<(String, ColumnKind)>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub patient_id: String,
    pub visit_month: Option<i32>,
    pub diagnosis: Diagnosis,
    pub cells: Vec<Cell>,
}

impl FeatureTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    /// New table restricted to the named columns (order preserved from
    /// the argument).
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::InvalidCohort(format!("unknown column {n}"))))
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| TableRow {
                    patient_id: r.patient_id.clone(),
                    visit_month: r.visit_month,
                    diagnosis: r.diagnosis,
                    cells: idx.iter().map(|&i| r.cells[i].clone()).collect(),
                })
                .collect(),
        })
    }

    pub fn patients(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.patient_id) {
                out.push(r.patient_id.clone());
            }
        }
        out
    }
}

/// Fuse radiomics fragments with the cohort's tabular columns.
///
/// Every fragment must reference a (patient, visit) present in the
/// cohort; at most one fragment per scan. Non-radiomics columns join on
/// the patient visit in per-visit layout; wide layout takes them from
/// the patient's earliest visit.
pub fn fuse(fragments: &[KeyedFragment], cohort: &Cohort, layout: &FuseLayout) -> Result<FeatureTable> {
    let mut record_keys: BTreeSet<(String, i32)> = BTreeSet::new();
    for r in &cohort.records {
        record_keys.insert((r.patient_id.clone(), r.visit_month));
    }
    let mut frag_map: BTreeMap<(String, i32), &RadiomicsFragment> = BTreeMap::new();
    for f in fragments {
        let key = (f.patient_id.clone(), f.visit_month);
        if !record_keys.contains(&key) {
            return Err(Error::UnknownPatient { patient: f.patient_id.clone(), visit: f.visit_month });
        }
        if frag_map.insert(key, &f.fragment).is_some() {
            return Err(Error::DuplicateFragment { patient: f.patient_id.clone(), visit: f.visit_month });
        }
    }

    // Catalog consistency plus the union of structure labels.
    let mut feature_names: Option<&[String]> = None;
    let mut labels: BTreeSet<u32> = BTreeSet::new();
    for frag in frag_map.values() {
        match feature_names {
            None => feature_names = Some(&frag.feature_names),
            Some(names) => {
                if names != frag.feature_names.as_slice() {
                    return Err(Error::InvalidCohort("fragments carry differing feature catalogs".into()));
                }
            }
        }
        labels.extend(frag.rows.iter().map(|&(l, _)| l));
    }
    let feature_names: Vec<String> = feature_names.map(|n| n.to_vec()).unwrap_or_default();

    // Non-radiomics columns: clinical + genotype (schema order) + MMSE.
    let mut columns: Vec<(String, ColumnKind)> = Vec::new();
    for name in &cohort.column_order {
        columns.push((name.clone(), cohort.schema.columns[name]));
    }
    let has_mmse = cohort.records.iter().any(|r| r.mmse_memory.is_some() || r.mmse_processing.is_some());
    if has_mmse {
        columns.push(("mmse_memory".into(), ColumnKind::Continuous));
        columns.push(("mmse_processing".into(), ColumnKind::Continuous));
    }
    let n_tabular = columns.len();

    let radiomics_cell = |frag: Option<&&RadiomicsFragment>, label: u32, fi: usize| -> Cell {
        match frag.and_then(|f| f.rows.iter().find(|&&(l, _)| l == label)) {
            Some((_, values)) => Cell::Num(values[fi]),
            None => Cell::Missing,
        }
    };

    let tabular_cells = |r: &PatientRecord| -> Vec<Cell> {
        let mut cells = Vec::with_capacity(n_tabular);
        let all: BTreeMap<&str, &Cell> =
            r.clinical.iter().chain(r.genotype.iter()).map(|(n, c)| (n.as_str(), c)).collect();
        for name in &cohort.column_order {
            cells.push(all.get(name.as_str()).map(|&c| c.clone()).unwrap_or(Cell::Missing));
        }
        if has_mmse {
            cells.push(r.mmse_memory.map(Cell::Num).unwrap_or(Cell::Missing));
            cells.push(r.mmse_processing.map(Cell::Num).unwrap_or(Cell::Missing));
        }
        cells
    };

    let mut rows = Vec::new();
    match layout {
        FuseLayout::PerVisit => {
            for (label, feature) in labels.iter().flat_map(|&l| feature_names.iter().map(move |f| (l, f))) {
                columns.push((radiomics_column(label, feature, None), ColumnKind::Continuous));
            }
            for r in &cohort.records {
                let mut cells = tabular_cells(r);
                let frag = frag_map.get(&(r.patient_id.clone(), r.visit_month));
                for &label in &labels {
                    for fi in 0..feature_names.len() {
                        cells.push(radiomics_cell(frag, label, fi));
                    }
                }
                rows.push(TableRow {
                    patient_id: r.patient_id.clone(),
                    visit_month: Some(r.visit_month),
                    diagnosis: r.diagnosis,
                    cells,
                });
            }
        }
        FuseLayout::Wide(visits) => {
            for &m in visits {
                for (label, feature) in labels.iter().flat_map(|&l| feature_names.iter().map(move |f| (l, f))) {
                    columns.push((radiomics_column(label, feature, Some(m)), ColumnKind::Continuous));
                }
            }
            let mut by_patient: BTreeMap<String, Vec<&PatientRecord>> = BTreeMap::new();
            for r in &cohort.records {
                by_patient.entry(r.patient_id.clone()).or_default().push(r);
            }
            for (patient, recs) in &by_patient {
                let base = recs.iter().min_by_key(|r| r.visit_month).unwrap();
                let mut cells = tabular_cells(base);
                for &m in visits {
                    let frag = frag_map.get(&(patient.clone(), m));
                    for &label in &labels {
                        for fi in 0..feature_names.len() {
                            cells.push(radiomics_cell(frag, label, fi));
                        }
                    }
                }
                rows.push(TableRow { patient_id: patient.clone(), visit_month: None, diagnosis: base.diagnosis, cells });
            }
        }
    }
    Ok(FeatureTable { columns, rows })
}

/// Write a fused table as CSV (`patient_id`, `visit_month`, `diagnosis`,
/// then feature columns; empty cells are missing) plus its schema sidecar.
pub fn write_table_csv(table: &FeatureTable, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path).map_err(Error::from)?;
    let mut header = vec!["patient_id".to_string(), "visit_month".to_string(), "diagnosis".to_string()];
    header.extend(table.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.patient_id.clone(),
            r.visit_month.map(|m| m.to_string()).unwrap_or_default(),
            r.diagnosis.as_str().to_string(),
        ];
        for c in &r.cells {
            rec.push(match c {
                Cell::Num(v) => format!("{v}"),
                Cell::Cat(s) => s.clone(),
                Cell::Missing => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let schema: BTreeMap<&String, &ColumnKind> = table.columns.iter().map(|(n, k)| (n, k)).collect();
    std::fs::write(schema_path, serde_json::to_vec_pretty(&schema)?)
        .map_err(|e| Error::io(schema_path.display().to_string(), e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Preprocessing: label encoding, standard scaling, class-based imputation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImputeValue {
    Num(f64),
    Token(String),
    None,
}

/// Encoders, scaling statistics, and imputation values fitted on training
/// rows only. Class-conditional values are used for training rows; global
/// values serve at inference time where the class is unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessState {
    pub columns: Vec<(String, ColumnKind)>,
    /// Sorted token lists per categorical column; code = position.
    pub encoders: Vec<Option<Vec<String>>>,
    /// (mean, std) per continuous column; std 0 replaced by 1.
    pub scale: Vec<Option<(f64, f64)>>,
    /// Per-class imputation values, keyed by diagnosis string.
    pub class_impute: Vec<BTreeMap<String, ImputeValue>>,
    pub global_impute: Vec<ImputeValue>,
}

fn continuous_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

fn mode(tokens: &[&String]) -> Option<String> {
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    // Strictly-greater updates over the lexicographic iteration keep the
    // smallest token among tied counts.
    let mut best: Option<(&String, usize)> = None;
    for (t, c) in counts {
        if best.map(|(_, bc)| c > bc).unwrap_or(true) {
            best = Some((t, c));
        }
    }
    best.map(|(t, _)| t.clone())
}

pub fn fit_preprocess(table: &FeatureTable, train_mask: &[bool]) -> Result<PreprocessState> {
    assert_eq!(train_mask.len(), table.rows.len(), "mask length must match row count");
    let train_rows: Vec<&TableRow> =
        table.rows.iter().zip(train_mask).filter(|&(_, &m)| m).map(|(r, _)| r).collect();
    if train_rows.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let table_classes: BTreeSet<Diagnosis> = table.rows.iter().map(|r| r.diagnosis).collect();
    let train_classes: BTreeSet<Diagnosis> = train_rows.iter().map(|r| r.diagnosis).collect();
    for c in &table_classes {
        if !train_classes.contains(c) {
            return Err(Error::ClassAbsent(c.as_str().to_string()));
        }
    }

    let ncols = table.columns.len();
    let mut encoders = vec![None; ncols];
    let mut scale = vec![None; ncols];
    let mut class_impute: Vec<BTreeMap<String, ImputeValue>> = vec![BTreeMap::new(); ncols];
    let mut global_impute = vec![ImputeValue::None; ncols];

    for (ci, (_, kind)) in table.columns.iter().enumerate() {
        match kind {
            ColumnKind::Continuous => {
                let observed: Vec<f64> = train_rows
                    .iter()
                    .filter_map(|r| match &r.cells[ci] {
                        Cell::Num(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                if !observed.is_empty() {
                    let stats = continuous_stats(&observed);
                    scale[ci] = Some(stats);
                    global_impute[ci] = ImputeValue::Num(stats.0);
                }
                for &class in &train_classes {
                    let vals: Vec<f64> = train_rows
                        .iter()
                        .filter(|r| r.diagnosis == class)
                        .filter_map(|r| match &r.cells[ci] {
                            Cell::Num(v) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    let value = if vals.is_empty() {
                        global_impute[ci].clone()
                    } else {
                        ImputeValue::Num(vals.iter().sum::<f64>() / vals.len() as f64)
                    };
                    class_impute[ci].insert(class.as_str().to_string(), value);
                }
            }
            ColumnKind::Categorical => {
                let mut tokens: Vec<String> = train_rows
                    .iter()
                    .filter_map(|r| match &r.cells[ci] {
                        Cell::Cat(t) => Some(t.clone()),
                        _ => None,
                    })
                    .collect();
                tokens.sort();
                tokens.dedup();
                let observed: Vec<&String> = train_rows
                    .iter()
                    .filter_map(|r| match &r.cells[ci] {
                        Cell::Cat(t) => Some(t),
                        _ => None,
                    })
                    .collect();
                global_impute[ci] = mode(&observed).map(ImputeValue::Token).unwrap_or(ImputeValue::None);
                encoders[ci] = Some(tokens);
                for &class in &train_classes {
                    let class_tokens: Vec<&String> = train_rows
                        .iter()
                        .filter(|r| r.diagnosis == class)
                        .filter_map(|r| match &r.cells[ci] {
                            Cell::Cat(t) => Some(t),
                            _ => None,
                        })
                        .collect();
                    let value = mode(&class_tokens)
                        .map(ImputeValue::Token)
                        .unwrap_or_else(|| global_impute[ci].clone());
                    class_impute[ci].insert(class.as_str().to_string(), value);
                }
            }
        }
    }
    Ok(PreprocessState { columns: table.columns.clone(), encoders, scale, class_impute, global_impute })
}

/// Numeric design matrix plus per-row diagnosis and patient group.
///
/// Missing cells are imputed from the row's class when
/// `allow_class_imputation` (training), otherwise from global training
/// statistics (inference, where the class is unknown). Unseen categorical
/// tokens encode as -1.
pub fn apply_preprocess(
    table: &FeatureTable,
    state: &PreprocessState,
    allow_class_imputation: bool,
) -> (Array2<f64>, Vec<Diagnosis>, Vec<String>) {
    assert_eq!(table.columns, state.columns, "table columns must match the fitted preprocess state");
    let nrows = table.rows.len();
    let ncols = table.columns.len();
    let mut matrix = Array2::<f64>::zeros((nrows, ncols));
    for (ri, row) in table.rows.iter().enumerate() {
        for ci in 0..ncols {
            let cell = &row.cells[ci];
            let filled: Cell = if cell.is_missing() {
                let impute = if allow_class_imputation {
                    state.class_impute[ci].get(row.diagnosis.as_str()).unwrap_or(&state.global_impute[ci])
                } else {
                    &state.global_impute[ci]
                };
                match impute {
                    ImputeValue::Num(v) => Cell::Num(*v),
                    ImputeValue::Token(t) => Cell::Cat(t.clone()),
                    ImputeValue::None => Cell::Missing,
                }
            } else {
                cell.clone()
            };
            matrix[[ri, ci]] = match (&table.columns[ci].1, &filled) {
                (ColumnKind::Continuous, Cell::Num(v)) => {
                    let (mean, std) = state.scale[ci].unwrap_or((0.0, 1.0));
                    (v - mean) / std
                }
                (ColumnKind::Categorical, Cell::Cat(t)) => state.encoders[ci]
                    .as_ref()
                    .and_then(|enc| enc.iter().position(|e| e == t))
                    .map(|p| p as f64)
                    .unwrap_or(-1.0),
                // Unimputable missing cells (column never observed in
                // train): scaled mean for continuous, unseen code for
                // categorical.
                (ColumnKind::Continuous, Cell::Missing) => 0.0,
                (ColumnKind::Categorical, Cell::Missing) => -1.0,
                (kind, cell) => unreachable!("cell {cell:?} in {kind:?} column"),
            };
        }
    }
    let labels = table.rows.iter().map(|r| r.diagnosis).collect();
    let groups = table.rows.iter().map(|r| r.patient_id.clone()).collect();
    (matrix, labels, groups)
}
