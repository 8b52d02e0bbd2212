//! Model-agnostic permutation importance and timepoint/structure
//! grouped views.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::derive_seed;
use crate::dfg::{predict_proba, DfgModel};
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::tabular::parse_radiomics_column;

const SALT_PERM: u64 = 0x5045524d; // "PERM"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMetric {
    Accuracy,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub importance_mean: f64,
    pub importance_std: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
    pub metric: ImportanceMetric,
    pub baseline: f64,
}

fn evaluate(metric: ImportanceMetric, model: &DfgModel, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
    let probs = predict_proba(model, x)?;
    match metric {
        ImportanceMetric::Accuracy => {
            let correct = probs
                .outer_iter()
                .zip(y)
                .filter(|(row, &t)| {
                    let pred = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                        .map(|(c, _)| c)
                        .unwrap();
                    pred == t
                })
                .count();
            Ok(correct as f64 / y.len() as f64)
        }
        ImportanceMetric::Auc => {
            let mut sum = 0.0;
            let mut count = 0usize;
            for c in 0..probs.ncols() {
                let labels: Vec<bool> = y.iter().map(|&t| t == c).collect();
                match roc_auc(&probs.column(c).to_vec(), &labels) {
                    Ok(a) => {
                        sum += a;
                        count += 1;
                    }
                    Err(Error::SingleClass) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(if count > 0 { sum / count as f64 } else { 0.5 })
        }
    }
}

/// importance(f) = baseline metric minus the mean metric over seeded
/// shuffles of column f. Negative values are allowed. The shuffle order
/// for (feature, repeat) is a pure function of the seed.
pub fn permutation_importance(
    model: &DfgModel,
    matrix: ArrayView2<'_, f64>,
    labels: &[usize],
    names: &[String],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    assert!(repeats >= 1, "repeats must be at least 1");
    assert_eq!(matrix.nrows(), labels.len());
    if matrix.ncols() != names.len() {
        return Err(Error::DimMismatch { expected: matrix.ncols(), got: names.len() });
    }
    let baseline = evaluate(metric, model, matrix, labels)?;
    let n = matrix.nrows();
    let mut features = Vec::with_capacity(names.len());
    for (ci, name) in names.iter().enumerate() {
        let mut drops = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, SALT_PERM ^ ((ci as u64) << 20) ^ r as u64));
            order.shuffle(&mut rng);
            let mut shuffled: Array2<f64> = matrix.to_owned();
            for (dst, &src) in order.iter().enumerate() {
                shuffled[[dst, ci]] = matrix[[src, ci]];
            }
            let score = evaluate(metric, model, shuffled.view(), labels)?;
            drops.push(baseline - score);
        }
        let mean = drops.iter().sum::<f64>() / repeats as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
        features.push(FeatureImportance {
            name: name.clone(),
            importance_mean: mean,
            importance_std: var.sqrt(),
            repeats,
        });
    }
    Ok(ImportanceReport { features, metric, baseline })
}

/// Importances summed per scan timepoint and per structure; non-radiomics
/// features group as "multi-omics".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedImportance {
    pub by_timepoint: Vec<(String, f64)>,
    pub by_structure: Vec<(String, f64)>,
}

pub fn group_by_timepoint(report: &ImportanceReport) -> Result<GroupedImportance> {
    let mut by_timepoint: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    let mut by_structure: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    for f in &report.features {
        match parse_radiomics_column(&f.name) {
            Some((label, _, Some(month))) => {
                *by_timepoint.entry(format!("m{month}")).or_insert(0.0) += f.importance_mean;
                *by_structure.entry(format!("s{label}")).or_insert(0.0) += f.importance_mean;
            }
            Some((_, _, None)) => return Err(Error::UnparseableName(f.name.clone())),
            None => {
                *by_timepoint.entry("multi-omics".into()).or_insert(0.0) += f.importance_mean;
                *by_structure.entry("multi-omics".into()).or_insert(0.0) += f.importance_mean;
            }
        }
    }
    Ok(GroupedImportance {
        by_timepoint: by_timepoint.into_iter().collect(),
        by_structure: by_structure.into_iter().collect(),
    })
}

/// Plot-data CSV: (feature, timepoint group, structure group, importance).
pub fn write_importance_csv(report: &ImportanceReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["feature", "timepoint_group", "structure_group", "importance"])?;
    for f in &report.features {
        let (tp, st) = match parse_radiomics_column(&f.name) {
            Some((label, _, Some(month))) => (format!("m{month}"), format!("s{label}")),
            _ => ("multi-omics".to_string(), "multi-omics".to_string()),
        };
        w.write_record([f.name.as_str(), tp.as_str(), st.as_str(), &format!("{}", f.importance_mean)])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
