//! Patient-grouped cross-validation, classification metrics, and the
//! experiment matrix over class filters, modalities, and timepoints.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::derive_seed;
use crate::dfg::{self, DfgConfig, DfgModel};
use crate::error::{Error, Result};
use crate::select::{sulov_select, truncate_top_k};
use crate::sha256_hex;
use crate::tabular::{
    apply_preprocess, fit_preprocess, fuse, is_radiomics_column, Cell, Cohort, ColumnKind, Diagnosis,
    FeatureTable, FuseLayout, KeyedFragment, PreprocessState, TableRow,
};

const SALT_FOLD_SEED: u64 = 0x464f4c44; // "FOLD"

// ---------------------------------------------------------------------------
// Grouped K-fold
// ---------------------------------------------------------------------------

/// Patient-to-fold assignment; every row of a patient shares its fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Sorted by patient id.
    pub assignments: Vec<(String, usize)>,
}

impl FoldPlan {
    pub fn fold_of(&self, patient: &str) -> Option<usize> {
        self.assignments.iter().find(|(p, _)| p == patient).map(|&(_, f)| f)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("plan serializes"))
    }
}

/// Shuffle distinct patients by seed, deal round-robin into k folds.
/// Fold sizes differ by at most one patient.
pub fn group_kfold(patient_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    assert!(k >= 1, "k must be at least 1");
    let mut distinct: Vec<String> = Vec::new();
    for p in patient_ids {
        if !distinct.contains(p) {
            distinct.push(p.clone());
        }
    }
    if distinct.len() < k {
        return Err(Error::TooFewGroups { groups: distinct.len(), k });
    }
    distinct.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let mut assignments: Vec<(String, usize)> =
        distinct.into_iter().enumerate().map(|(t, p)| (p, t % k)).collect();
    assignments.sort();
    Ok(FoldPlan { k, assignments })
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub auc: f64,
}

/// Mann-Whitney AUC: the probability a random positive outscores a
/// random negative, ties counted one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    // Mid-rank assignment over sorted scores.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0f64; scores.len()];
    let mut t = 0;
    while t < order.len() {
        let mut u = t;
        while u + 1 < order.len() && scores[order[u + 1]] == scores[order[t]] {
            u += 1;
        }
        let mid = (t + u) as f64 / 2.0 + 1.0;
        for &idx in &order[t..=u] {
            ranks[idx] = mid;
        }
        t = u + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|&(_, &l)| l).map(|(&r, _)| r).sum();
    Ok((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// Accuracy plus macro-averaged precision/recall/F1 (0/0 counted as 0)
/// and macro one-vs-rest AUC. `scores` holds per-class probabilities.
pub fn metrics(predicted: &[usize], truth: &[usize], scores: ArrayView2<'_, f64>) -> Result<MetricSet> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch(predicted.len(), truth.len()));
    }
    assert_eq!(scores.nrows(), truth.len(), "score rows must match labels");
    let n = truth.len();
    let n_classes = scores.ncols();
    let accuracy = predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / n as f64;

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in 0..n_classes {
        let tp = predicted.iter().zip(truth).filter(|&(&p, &t)| p == c && t == c).count() as f64;
        let fp = predicted.iter().zip(truth).filter(|&(&p, &t)| p == c && t != c).count() as f64;
        let fn_ = predicted.iter().zip(truth).filter(|&(&p, &t)| p != c && t == c).count() as f64;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        precision_sum += prec;
        recall_sum += rec;
        f1_sum += f1;
    }

    // Macro one-vs-rest AUC over classes with both outcomes present.
    let mut auc_sum = 0.0;
    let mut auc_count = 0usize;
    for c in 0..n_classes {
        let labels: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let col: Vec<f64> = scores.column(c).to_vec();
        match roc_auc(&col, &labels) {
            Ok(a) => {
                auc_sum += a;
                auc_count += 1;
            }
            Err(Error::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    let auc = if auc_count > 0 { auc_sum / auc_count as f64 } else { 0.5 };

    Ok(MetricSet {
        accuracy,
        f1: f1_sum / n_classes as f64,
        recall: recall_sum / n_classes as f64,
        precision: precision_sum / n_classes as f64,
        auc,
    })
}

// ---------------------------------------------------------------------------
// Experiment specification and report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassFilter {
    AdVsCtl,
    AdVsMci,
    MciVsCtl,
    AdVsVad,
    All4,
}

impl ClassFilter {
    pub const ALL: [ClassFilter; 5] = [
        ClassFilter::AdVsCtl,
        ClassFilter::AdVsMci,
        ClassFilter::MciVsCtl,
        ClassFilter::AdVsVad,
        ClassFilter::All4,
    ];

    pub fn classes(self) -> Vec<Diagnosis> {
        match self {
            ClassFilter::AdVsCtl => vec![Diagnosis::Ad, Diagnosis::Ctl],
            ClassFilter::AdVsMci => vec![Diagnosis::Ad, Diagnosis::Mci],
            ClassFilter::MciVsCtl => vec![Diagnosis::Mci, Diagnosis::Ctl],
            ClassFilter::AdVsVad => vec![Diagnosis::Ad, Diagnosis::Vad],
            ClassFilter::All4 => Diagnosis::ALL.to_vec(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClassFilter::AdVsCtl => "AD vs CTL",
            ClassFilter::AdVsMci => "AD vs MCI",
            ClassFilter::MciVsCtl => "MCI vs CTL",
            ClassFilter::AdVsVad => "AD vs VaD",
            ClassFilter::All4 => "All 4 classes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    MriOnly,
    MultiOmics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timepoints {
    Month0,
    AllVisits,
}

impl Timepoints {
    pub fn visits(self) -> Vec<i32> {
        match self {
            Timepoints::Month0 => vec![0],
            Timepoints::AllVisits => vec![0, 3, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub class_filter: ClassFilter,
    pub modality: Modality,
    pub timepoints: Timepoints,
    pub dfg_enabled: bool,
    pub seed: u64,
}

/// Pipeline-stage settings shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub k_folds: usize,
    pub corr_threshold: f64,
    /// Cap on selected features (None keeps every survivor).
    pub top_k: Option<usize>,
    pub mi_bins: usize,
    pub dfg: DfgConfig,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            k_folds: 5,
            corr_threshold: crate::select::DEFAULT_CORR_THRESHOLD,
            top_k: Some(32),
            mi_bins: crate::select::DEFAULT_MI_BINS,
            // Desk-scale cohorts see one Adam step per epoch (train sets
            // smaller than one batch), so the pipeline default raises the
            // learning rate; the network's own default stays 1e-3.
            dfg: DfgConfig { learning_rate: 1e-2, ..DfgConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: ExperimentSpec,
    pub folds: Vec<MetricSet>,
    pub mean: MetricSet,
    pub fold_plan_digest: String,
    pub config_digest: String,
}

fn mean_metrics(folds: &[MetricSet]) -> MetricSet {
    let n = folds.len() as f64;
    MetricSet {
        accuracy: folds.iter().map(|m| m.accuracy).sum::<f64>() / n,
        f1: folds.iter().map(|m| m.f1).sum::<f64>() / n,
        recall: folds.iter().map(|m| m.recall).sum::<f64>() / n,
        precision: folds.iter().map(|m| m.precision).sum::<f64>() / n,
        auc: folds.iter().map(|m| m.auc).sum::<f64>() / n,
    }
}

/// Restrict a fused table to the experiment's modality.
fn modality_columns(table: &FeatureTable, modality: Modality) -> Vec<String> {
    table
        .columns
        .iter()
        .map(|(n, _)| n.clone())
        .filter(|n| match modality {
            Modality::MriOnly => is_radiomics_column(n),
            Modality::MultiOmics => true,
        })
        .collect()
}

/// One fold of the modelling pipeline: preprocess and select on training
/// rows only, train, score the test rows.
#[allow(clippy::too_many_arguments)]
fn run_fold(
    table: &FeatureTable,
    classes: &[Diagnosis],
    plan: &FoldPlan,
    fold: usize,
    settings: &PipelineSettings,
    dfg_enabled: bool,
    seed: u64,
) -> Result<MetricSet> {
    let train_mask: Vec<bool> =
        table.rows.iter().map(|r| plan.fold_of(&r.patient_id) != Some(fold)).collect();
    let test_rows: Vec<usize> = (0..table.rows.len()).filter(|&i| !train_mask[i]).collect();
    assert!(!test_rows.is_empty(), "fold {fold} has no test rows");

    let state = fit_preprocess(table, &train_mask)?;
    let (matrix, diagnoses, groups) = apply_preprocess(table, &state, true);
    let class_index = |d: Diagnosis| classes.iter().position(|&c| c == d).expect("filtered class");
    let labels: Vec<usize> = diagnoses.iter().map(|&d| class_index(d)).collect();

    let train_idx: Vec<usize> = (0..table.rows.len()).filter(|&i| train_mask[i]).collect();
    let train_matrix = matrix.select(Axis(0), &train_idx);
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let train_groups: Vec<String> = train_idx.iter().map(|&i| groups[i].clone()).collect();

    let names: Vec<String> = table.columns.iter().map(|(n, _)| n.clone()).collect();
    let kinds: Vec<ColumnKind> = table.columns.iter().map(|&(_, k)| k).collect();
    let selection = sulov_select(
        train_matrix.view(),
        &names,
        &kinds,
        &train_labels,
        settings.corr_threshold,
        settings.mi_bins,
    )?;
    let kept = match settings.top_k {
        Some(k) => truncate_top_k(&selection, k),
        None => selection.kept.clone(),
    };
    let kept_idx: Vec<usize> =
        kept.iter().map(|n| names.iter().position(|m| m == n).unwrap()).collect();

    let config = DfgConfig {
        n_classes: classes.len(),
        seed: derive_seed(seed, SALT_FOLD_SEED ^ fold as u64),
        conv_enabled: dfg_enabled,
        ..settings.dfg.clone()
    };
    let x_train = train_matrix.select(Axis(1), &kept_idx);
    let (model, _log) = dfg::train(x_train.view(), &train_labels, &train_groups, &config)?;

    // Test rows are re-preprocessed without class knowledge.
    let (matrix_blind, _, _) = apply_preprocess(table, &state, false);
    let x_test = matrix_blind.select(Axis(0), &test_rows).select(Axis(1), &kept_idx);
    let probs = dfg::predict_proba(&model, x_test.view())?;
    let predicted: Vec<usize> = probs
        .outer_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap()
        })
        .collect();
    let truth: Vec<usize> = test_rows.iter().map(|&i| labels[i]).collect();
    metrics(&predicted, &truth, probs.view())
}

/// Filter, fuse, cross-validate, and summarize one experiment.
pub fn run_experiment(
    fragments: &[KeyedFragment],
    cohort: &Cohort,
    spec: &ExperimentSpec,
    settings: &PipelineSettings,
) -> Result<EvalReport> {
    let classes = spec.class_filter.classes();
    let mut sub = cohort.clone();
    sub.records.retain(|r| classes.contains(&r.diagnosis));
    if sub.records.is_empty() {
        return Err(Error::InvalidCohort(format!(
            "cohort has no rows for classes {:?}",
            classes.iter().map(|c| c.as_str()).collect::<Vec<_>>()
        )));
    }
    for c in &classes {
        if !sub.records.iter().any(|r| r.diagnosis == *c) {
            return Err(Error::ClassAbsent(c.as_str().to_string()));
        }
    }
    let visits = spec.timepoints.visits();
    let patients: std::collections::BTreeSet<String> =
        sub.records.iter().map(|r| r.patient_id.clone()).collect();
    let kept_fragments: Vec<KeyedFragment> = fragments
        .iter()
        .filter(|f| patients.contains(&f.patient_id) && visits.contains(&f.visit_month))
        .cloned()
        .collect();

    let table = fuse(&kept_fragments, &sub, &FuseLayout::Wide(visits))?;
    let table = table.select_columns(&modality_columns(&table, spec.modality))?;

    let patient_list: Vec<String> = table.rows.iter().map(|r| r.patient_id.clone()).collect();
    let plan = group_kfold(&patient_list, settings.k_folds, spec.seed)?;

    let mut folds = Vec::with_capacity(settings.k_folds);
    for fold in 0..settings.k_folds {
        folds.push(run_fold(&table, &classes, &plan, fold, settings, spec.dfg_enabled, spec.seed)?);
    }
    let mean = mean_metrics(&folds);
    let config_digest = sha256_hex(&serde_json::to_vec(&(spec, settings)).expect("spec serializes"));
    Ok(EvalReport { spec: spec.clone(), folds, mean, fold_plan_digest: plan.digest(), config_digest })
}

// ---------------------------------------------------------------------------
// Model bundle: one trained pipeline, serialized for reuse
// ---------------------------------------------------------------------------

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleLayout {
    PerVisit,
    Wide(Vec<i32>),
}

/// Everything needed to score new rows: fuse layout, modality, fitted
/// preprocessing, the selected columns, and the trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub classes: Vec<Diagnosis>,
    pub modality: Modality,
    pub layout: BundleLayout,
    pub preprocess: PreprocessState,
    pub selected: Vec<String>,
    pub model_json: serde_json::Value,
    pub config_digest: String,
}

impl ModelBundle {
    pub fn model(&self) -> Result<DfgModel> {
        dfg::model_from_json(&self.model_json)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_slice(
            &std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?,
        )?;
        if bundle.version != BUNDLE_FORMAT_VERSION {
            return Err(Error::ModelVersion { expected: BUNDLE_FORMAT_VERSION, got: bundle.version });
        }
        bundle.model()?;
        Ok(bundle)
    }

    pub fn fuse_layout(&self) -> FuseLayout {
        match &self.layout {
            BundleLayout::PerVisit => FuseLayout::PerVisit,
            BundleLayout::Wide(v) => FuseLayout::Wide(v.clone()),
        }
    }

    /// Score a fused table: align columns to the fitted set, preprocess
    /// without class knowledge, restrict to selected features, predict.
    pub fn score_table(&self, table: &FeatureTable) -> Result<Array2<f64>> {
        let aligned = align_to_columns(table, &self.preprocess.columns);
        let (matrix, _, _) = apply_preprocess(&aligned, &self.preprocess, false);
        let kept_idx: Vec<usize> = self
            .selected
            .iter()
            .map(|n| {
                self.preprocess
                    .columns
                    .iter()
                    .position(|(m, _)| m == n)
                    .ok_or_else(|| Error::InvalidModel(format!("selected column {n} missing from state")))
            })
            .collect::<Result<_>>()?;
        let x = matrix.select(Axis(1), &kept_idx);
        dfg::predict_proba(&self.model()?, x.view())
    }
}

/// Reshape a table onto an exact column set: matching columns keep their
/// cells, absent columns fill with Missing, extras drop.
pub fn align_to_columns(table: &FeatureTable, columns: &[(String, ColumnKind)]) -> FeatureTable {
    let src: Vec<Option<usize>> = columns.iter().map(|(n, _)| table.column_index(n)).collect();
    FeatureTable {
        columns: columns.to_vec(),
        rows: table
            .rows
            .iter()
            .map(|r| TableRow {
                patient_id: r.patient_id.clone(),
                visit_month: r.visit_month,
                diagnosis: r.diagnosis,
                cells: src
                    .iter()
                    .map(|s| s.map(|i| r.cells[i].clone()).unwrap_or(Cell::Missing))
                    .collect(),
            })
            .collect(),
    }
}

/// Train a bundle on the full given cohort (no held-out folds). Used by
/// the CLI `train` subcommand; monitoring requires the training cohort to
/// exclude monitored patients, which is the caller's responsibility.
pub fn fit_bundle(
    fragments: &[KeyedFragment],
    cohort: &Cohort,
    classes: &[Diagnosis],
    modality: Modality,
    layout: &FuseLayout,
    settings: &PipelineSettings,
    seed: u64,
) -> Result<ModelBundle> {
    let mut sub = cohort.clone();
    sub.records.retain(|r| classes.contains(&r.diagnosis));
    for c in classes {
        if !sub.records.iter().any(|r| r.diagnosis == *c) {
            return Err(Error::ClassAbsent(c.as_str().to_string()));
        }
    }
    let patients: std::collections::BTreeSet<String> =
        sub.records.iter().map(|r| r.patient_id.clone()).collect();
    let visits = match layout {
        FuseLayout::PerVisit => crate::tabular::VISIT_MONTHS.to_vec(),
        FuseLayout::Wide(v) => v.clone(),
    };
    let kept_fragments: Vec<KeyedFragment> = fragments
        .iter()
        .filter(|f| patients.contains(&f.patient_id) && visits.contains(&f.visit_month))
        .cloned()
        .collect();
    let table = fuse(&kept_fragments, &sub, layout)?;
    let table = table.select_columns(&modality_columns(&table, modality))?;

    let state = fit_preprocess(&table, &vec![true; table.rows.len()])?;
    let (matrix, diagnoses, groups) = apply_preprocess(&table, &state, true);
    let labels: Vec<usize> = diagnoses
        .iter()
        .map(|d| classes.iter().position(|c| c == d).expect("filtered class"))
        .collect();
    let names: Vec<String> = table.columns.iter().map(|(n, _)| n.clone()).collect();
    let kinds: Vec<ColumnKind> = table.columns.iter().map(|&(_, k)| k).collect();
    let selection =
        sulov_select(matrix.view(), &names, &kinds, &labels, settings.corr_threshold, settings.mi_bins)?;
    let kept = match settings.top_k {
        Some(k) => truncate_top_k(&selection, k),
        None => selection.kept.clone(),
    };
    let kept_idx: Vec<usize> = kept.iter().map(|n| names.iter().position(|m| m == n).unwrap()).collect();
    let config = DfgConfig {
        n_classes: classes.len(),
        seed: derive_seed(seed, SALT_FOLD_SEED),
        ..settings.dfg.clone()
    };
    let x = matrix.select(Axis(1), &kept_idx);
    let (model, _log) = dfg::train(x.view(), &labels, &groups, &config)?;
    let config_digest = sha256_hex(&serde_json::to_vec(&(classes, &modality, settings, seed)).expect("serializes"));
    Ok(ModelBundle {
        version: BUNDLE_FORMAT_VERSION,
        classes: classes.to_vec(),
        modality,
        layout: match layout {
            FuseLayout::PerVisit => BundleLayout::PerVisit,
            FuseLayout::Wide(v) => BundleLayout::Wide(v.clone()),
        },
        preprocess: state,
        selected: kept,
        model_json: dfg::model_to_json(&model),
        config_digest,
    })
}
