//! Subcommand implementations.

use std::path::Path;

use brainomics::error::{Error, Result};
use brainomics::eval::{
    fit_bundle, run_experiment, BundleLayout, EvalReport, ExperimentSpec, Modality, ModelBundle,
    PipelineSettings,
};
use brainomics::explain::{group_by_timepoint, permutation_importance, write_importance_csv, ImportanceMetric};
use brainomics::monitor::{cohort_report, trajectory, write_trajectory_csv, DecreaseAverage, Trajectory};
use brainomics::radiomics::{extract_all, write_fragment_csv, RadiomicsConfig};
use brainomics::select::sulov_select;
use brainomics::synth::{generate_cohort, generate_treated_pair, SynthSpec};
use brainomics::tabular::{
    apply_preprocess, fit_preprocess, fuse, write_table_csv, ColumnKind, Diagnosis, FuseLayout,
};
use brainomics::volume::{load_mask, load_volume};
use brainomics::sha256_hex;

use crate::config::PipelineConfig;
use crate::util::{
    load_cohort_with_schema, load_fragments, mkdir, parse_layout, parse_scan_stem, scan_stem, write_json,
    write_meta,
};

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(Error::from)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(spec_arg: &str, out: &Path, seed: Option<u64>, treated_pair: bool) -> Result<()> {
    let mut spec: SynthSpec = match spec_arg {
        "strong" => SynthSpec::strong_separation(20240501),
        "null" => SynthSpec::null_spec(20240502),
        path => read_json_file(Path::new(path))?,
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    mkdir(out)?;
    let manifest = if treated_pair {
        generate_treated_pair(&spec, out)?
    } else {
        generate_cohort(&spec, out)?
    };
    eprintln!("generated {} files under {}", manifest.files.len(), out.display());
    println!(
        "{}",
        serde_json::json!({
            "command": "synth",
            "out": out.display().to_string(),
            "files": manifest.files.len(),
            "patients": manifest.patients.len(),
            "manifest": out.join("manifest.json").display().to_string(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

pub fn cmd_extract(
    volumes: &Path,
    masks: &Path,
    out: &Path,
    config_path: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let config: RadiomicsConfig = match config_path {
        Some(p) => read_json_file(p)?,
        None => RadiomicsConfig::default(),
    };
    let config_digest = sha256_hex(&serde_json::to_vec(&config)?);
    mkdir(out)?;

    let entries = std::fs::read_dir(volumes).map_err(|e| Error::io(volumes.display().to_string(), e))?;
    let mut scans: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(volumes.display().to_string(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = scan_stem(&name) {
            if parse_scan_stem(stem).is_none() {
                return Err(Error::InvalidCohort(format!(
                    "volume {name} is not named <patient>_m<visit>.<ext>"
                )));
            }
            scans.push((stem.to_string(), entry.path()));
        }
    }
    scans.sort();
    if scans.is_empty() {
        return Err(Error::UnsupportedFormat(format!("no volumes found under {}", volumes.display())));
    }

    let find_mask = |stem: &str| -> Result<std::path::PathBuf> {
        for ext in ["vol.json", "nii", "nii.gz"] {
            let candidate = masks.join(format!("{stem}.{ext}"));
            if candidate.exists() {
                return Ok(candidate);
            }
        }
        Err(Error::io(
            masks.join(format!("{stem}.vol.json")).display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "mask file not found"),
        ))
    };

    let run = |(stem, vol_path): &(String, std::path::PathBuf)| -> Result<std::path::PathBuf> {
        let mask_path = find_mask(stem)?;
        let vol = load_volume(vol_path)?;
        let mask = load_mask(&mask_path)?;
        let fragment = extract_all(&vol, &mask, &config)?;
        let out_path = out.join(format!("{stem}.features.csv"));
        write_fragment_csv(&fragment, &out_path)?;
        eprintln!("extracted {stem}: {} structures", fragment.rows.len());
        Ok(out_path)
    };

    let results: Vec<Result<std::path::PathBuf>> = if jobs == 1 {
        scans.iter().map(run).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidCohort(format!("thread pool: {e}")))?;
        pool.install(|| scans.par_iter().map(run).collect())
    };
    let mut files = Vec::with_capacity(results.len());
    for r in results {
        files.push(r?);
    }
    files.sort();
    write_meta(out, "extract", &config_digest, &files)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "extract",
            "out": out.display().to_string(),
            "fragments": files.len(),
            "config_digest": config_digest,
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

pub fn cmd_preprocess(cohort_path: &Path, fragments_dir: &Path, out: &Path, layout: &str) -> Result<()> {
    let cohort = load_cohort_with_schema(cohort_path)?;
    let fragments = load_fragments(fragments_dir)?;
    let layout = parse_layout(layout)?;
    let table = fuse(&fragments, &cohort, &layout)?;
    mkdir(out)?;
    let csv_path = out.join("fused.csv");
    let schema_path = out.join("fused.schema.json");
    write_table_csv(&table, &csv_path, &schema_path)?;
    let digest = sha256_hex(&serde_json::to_vec(&(
        cohort_path.display().to_string(),
        fragments_dir.display().to_string(),
    ))?);
    write_meta(out, "preprocess", &digest, &[csv_path, schema_path])?;
    println!(
        "{}",
        serde_json::json!({
            "command": "preprocess",
            "rows": table.rows.len(),
            "columns": table.columns.len(),
            "out": out.display().to_string(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

pub fn cmd_select(
    cohort_path: &Path,
    fragments_dir: &Path,
    out: &Path,
    layout: &str,
    corr_threshold: f64,
    mi_bins: usize,
) -> Result<()> {
    let cohort = load_cohort_with_schema(cohort_path)?;
    let fragments = load_fragments(fragments_dir)?;
    let layout = parse_layout(layout)?;
    let table = fuse(&fragments, &cohort, &layout)?;
    let state = fit_preprocess(&table, &vec![true; table.rows.len()])?;
    let (matrix, diagnoses, _) = apply_preprocess(&table, &state, true);
    let classes: Vec<Diagnosis> = Diagnosis::ALL
        .into_iter()
        .filter(|d| diagnoses.contains(d))
        .collect();
    let labels: Vec<usize> = diagnoses
        .iter()
        .map(|d| classes.iter().position(|c| c == d).unwrap())
        .collect();
    let names: Vec<String> = table.columns.iter().map(|(n, _)| n.clone()).collect();
    let kinds: Vec<ColumnKind> = table.columns.iter().map(|&(_, k)| k).collect();
    let result = sulov_select(matrix.view(), &names, &kinds, &labels, corr_threshold, mi_bins)?;
    mkdir(out)?;
    let digest = sha256_hex(&serde_json::to_vec(&(corr_threshold, mi_bins))?);
    let path = out.join("selection.json");
    write_json(
        &path,
        &serde_json::json!({
            "config_digest": digest,
            "corr_threshold": corr_threshold,
            "mi_bins": mi_bins,
            "selection": result,
        }),
    )?;
    write_meta(out, "select", &digest, &[path])?;
    println!(
        "{}",
        serde_json::json!({
            "command": "select",
            "kept": result.kept.len(),
            "dropped": result.dropped.len(),
            "out": out.display().to_string(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn parse_classes(arg: &str) -> Result<Vec<Diagnosis>> {
    let mut classes = Vec::new();
    for part in arg.split(',') {
        let d = Diagnosis::parse(part.trim())?;
        if !classes.contains(&d) {
            classes.push(d);
        }
    }
    if classes.len() < 2 {
        return Err(Error::InvalidCohort(format!("need at least two classes, got {arg:?}")));
    }
    // Canonical order keeps class indexing stable.
    classes.sort_by_key(|d| Diagnosis::ALL.iter().position(|c| c == d).unwrap());
    Ok(classes)
}

fn parse_modality(arg: &str) -> Result<Modality> {
    match arg {
        "mri" => Ok(Modality::MriOnly),
        "multi-omics" => Ok(Modality::MultiOmics),
        other => Err(Error::InvalidCohort(format!("unknown modality {other:?} (mri|multi-omics)"))),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    cohort_path: &Path,
    fragments_dir: &Path,
    out: &Path,
    classes_arg: &str,
    layout: &str,
    modality_arg: &str,
    settings_path: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let cohort = load_cohort_with_schema(cohort_path)?;
    let fragments = load_fragments(fragments_dir)?;
    let classes = parse_classes(classes_arg)?;
    let layout = parse_layout(layout)?;
    let modality = parse_modality(modality_arg)?;
    let settings: PipelineSettings = match settings_path {
        Some(p) => read_json_file(p)?,
        None => PipelineSettings::default(),
    };
    let bundle = fit_bundle(&fragments, &cohort, &classes, modality, &layout, &settings, seed)?;
    mkdir(out)?;
    let path = out.join("model.json");
    bundle.save(&path)?;
    write_meta(out, "train", &bundle.config_digest, &[path.clone()])?;
    println!(
        "{}",
        serde_json::json!({
            "command": "train",
            "model": path.display().to_string(),
            "classes": classes.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            "selected_features": bundle.selected.len(),
            "config_digest": bundle.config_digest,
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn spec_slug(spec: &ExperimentSpec) -> String {
    let filter = match spec.class_filter {
        brainomics::eval::ClassFilter::AdVsCtl => "ad_ctl",
        brainomics::eval::ClassFilter::AdVsMci => "ad_mci",
        brainomics::eval::ClassFilter::MciVsCtl => "mci_ctl",
        brainomics::eval::ClassFilter::AdVsVad => "ad_vad",
        brainomics::eval::ClassFilter::All4 => "all4",
    };
    let modality = match spec.modality {
        Modality::MriOnly => "mri",
        Modality::MultiOmics => "omics",
    };
    let tp = match spec.timepoints {
        brainomics::eval::Timepoints::Month0 => "m0",
        brainomics::eval::Timepoints::AllVisits => "all",
    };
    let dfg = if spec.dfg_enabled { "dfg" } else { "nodfg" };
    format!("{filter}_{modality}_{tp}_{dfg}")
}

fn print_report_table(reports: &[(String, &EvalReport)]) {
    println!(
        "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "experiment", "accuracy", "f1", "recall", "precision", "auc"
    );
    for (slug, r) in reports {
        println!(
            "{:<28} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            slug, r.mean.accuracy, r.mean.f1, r.mean.recall, r.mean.precision, r.mean.auc
        );
    }
}

pub fn cmd_run(
    config_path: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    full_matrix: bool,
    with_ablation: bool,
) -> Result<()> {
    let mut config: PipelineConfig = read_json_file(config_path)?;
    if full_matrix {
        config.experiments = PipelineConfig::full_matrix(config.seed, with_ablation);
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
        for e in &mut config.experiments {
            e.seed = seed;
        }
    }
    if let Some(out) = out_override {
        config.paths.out = out.to_path_buf();
    }
    if config.experiments.is_empty() {
        return Err(Error::InvalidCohort("experiment list is empty".into()));
    }
    let digest = config.digest();
    let cohort = load_cohort_with_schema(&config.paths.cohort)?;
    let fragments = load_fragments(&config.paths.fragments)?;
    let out = config.paths.out.clone();
    mkdir(&out)?;

    let mut files = Vec::new();
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for spec in &config.experiments {
        let slug = spec_slug(spec);
        eprintln!("running experiment {slug}");
        let report = run_experiment(&fragments, &cohort, spec, &config.settings)?;
        let path = out.join(format!("report_{slug}.json"));
        write_json(
            &path,
            &serde_json::json!({
                "config_digest": digest,
                "report": report,
            }),
        )?;
        files.push(path);
        reports.push((slug, report));
    }

    // Summary CSV: one row per experiment, mirroring the scenario columns.
    let summary_path = out.join("summary.csv");
    {
        let mut w = csv::Writer::from_path(&summary_path).map_err(Error::from)?;
        w.write_record([
            "class_filter",
            "modality",
            "timepoints",
            "dfg",
            "accuracy",
            "f1",
            "recall",
            "precision",
            "auc",
            "config_digest",
        ])?;
        for (_, r) in &reports {
            w.write_record([
                r.spec.class_filter.label(),
                match r.spec.modality {
                    Modality::MriOnly => "MRI",
                    Modality::MultiOmics => "Multi-omics",
                },
                match r.spec.timepoints {
                    brainomics::eval::Timepoints::Month0 => "MRI at time 0",
                    brainomics::eval::Timepoints::AllVisits => "All",
                },
                if r.spec.dfg_enabled { "with" } else { "without" },
                &format!("{:.6}", r.mean.accuracy),
                &format!("{:.6}", r.mean.f1),
                &format!("{:.6}", r.mean.recall),
                &format!("{:.6}", r.mean.precision),
                &format!("{:.6}", r.mean.auc),
                &digest,
            ])?;
        }
        w.flush().map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    }
    files.push(summary_path);

    // With/without comparison for matching spec pairs.
    let pairs: Vec<(&(String, EvalReport), &(String, EvalReport))> = reports
        .iter()
        .filter(|(_, r)| r.spec.dfg_enabled)
        .filter_map(|on| {
            reports
                .iter()
                .find(|(_, r)| {
                    !r.spec.dfg_enabled
                        && r.spec.class_filter == on.1.spec.class_filter
                        && r.spec.modality == on.1.spec.modality
                        && r.spec.timepoints == on.1.spec.timepoints
                })
                .map(|off| (on, off))
        })
        .collect();
    if !pairs.is_empty() {
        let cmp_path = out.join("dfg_comparison.csv");
        let mut w = csv::Writer::from_path(&cmp_path).map_err(Error::from)?;
        w.write_record([
            "class_filter",
            "modality",
            "timepoints",
            "accuracy_with_dfg",
            "accuracy_without_dfg",
            "accuracy_delta",
            "config_digest",
        ])?;
        for (on, off) in &pairs {
            w.write_record([
                on.1.spec.class_filter.label(),
                match on.1.spec.modality {
                    Modality::MriOnly => "MRI",
                    Modality::MultiOmics => "Multi-omics",
                },
                match on.1.spec.timepoints {
                    brainomics::eval::Timepoints::Month0 => "MRI at time 0",
                    brainomics::eval::Timepoints::AllVisits => "All",
                },
                &format!("{:.6}", on.1.mean.accuracy),
                &format!("{:.6}", off.1.mean.accuracy),
                &format!("{:.6}", on.1.mean.accuracy - off.1.mean.accuracy),
                &digest,
            ])?;
        }
        w.flush().map_err(|e| Error::io(cmp_path.display().to_string(), e))?;
        files.push(cmp_path);
    }

    write_meta(&out, "run", &digest, &files)?;
    let view: Vec<(String, &EvalReport)> = reports.iter().map(|(s, r)| (s.clone(), r)).collect();
    print_report_table(&view);
    Ok(())
}

// ---------------------------------------------------------------------------
// importance
// ---------------------------------------------------------------------------

pub fn cmd_importance(
    model_path: &Path,
    cohort_path: &Path,
    fragments_dir: &Path,
    out: &Path,
    metric_arg: &str,
    repeats: usize,
    seed: u64,
) -> Result<()> {
    let bundle = ModelBundle::load(model_path)?;
    let cohort = load_cohort_with_schema(cohort_path)?;
    let fragments = load_fragments(fragments_dir)?;
    let metric = match metric_arg {
        "accuracy" => ImportanceMetric::Accuracy,
        "auc" => ImportanceMetric::Auc,
        other => return Err(Error::InvalidCohort(format!("unknown metric {other:?} (accuracy|auc)"))),
    };

    let mut sub = cohort.clone();
    sub.records.retain(|r| bundle.classes.contains(&r.diagnosis));
    let patients: std::collections::BTreeSet<String> =
        sub.records.iter().map(|r| r.patient_id.clone()).collect();
    let kept: Vec<_> = fragments.into_iter().filter(|f| patients.contains(&f.patient_id)).collect();
    let table = fuse(&kept, &sub, &bundle.fuse_layout())?;
    let aligned = brainomics::eval::align_to_columns(&table, &bundle.preprocess.columns);
    let (matrix, diagnoses, _) = apply_preprocess(&aligned, &bundle.preprocess, false);
    let labels: Vec<usize> = diagnoses
        .iter()
        .map(|d| bundle.classes.iter().position(|c| c == d).unwrap())
        .collect();
    let kept_idx: Vec<usize> = bundle
        .selected
        .iter()
        .map(|n| bundle.preprocess.columns.iter().position(|(m, _)| m == n).unwrap())
        .collect();
    let x = matrix.select(ndarray::Axis(1), &kept_idx);
    let model = bundle.model()?;
    let report = permutation_importance(&model, x.view(), &labels, &bundle.selected, metric, repeats, seed)?;

    mkdir(out)?;
    let mut files = Vec::new();
    let report_path = out.join("importance.json");
    write_json(
        &report_path,
        &serde_json::json!({
            "config_digest": bundle.config_digest,
            "report": report,
        }),
    )?;
    files.push(report_path);
    let csv_path = out.join("importance.csv");
    write_importance_csv(&report, &csv_path)?;
    files.push(csv_path);
    // Timepoint grouping only applies to wide layouts whose names carry
    // the `_m<visit>` suffix.
    if matches!(bundle.layout, BundleLayout::Wide(_)) {
        let grouped = group_by_timepoint(&report)?;
        let grouped_path = out.join("importance_grouped.json");
        write_json(
            &grouped_path,
            &serde_json::json!({
                "config_digest": bundle.config_digest,
                "grouped": grouped,
            }),
        )?;
        files.push(grouped_path);
    }
    write_meta(out, "importance", &bundle.config_digest, &files)?;
    println!(
        "{}",
        serde_json::json!({
            "command": "importance",
            "features": report.features.len(),
            "baseline": report.baseline,
            "out": out.display().to_string(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn cmd_monitor(
    model_path: &Path,
    treated_cohort: &Path,
    treated_fragments: &Path,
    control_cohort: &Path,
    control_fragments: &Path,
    out: &Path,
    target_arg: &str,
    horizon: i32,
    average_arg: &str,
) -> Result<()> {
    let bundle = ModelBundle::load(model_path)?;
    if !matches!(bundle.layout, BundleLayout::PerVisit) {
        return Err(Error::InvalidModel("monitoring requires a per-visit model bundle".into()));
    }
    let target = Diagnosis::parse(target_arg)?;
    let average = match average_arg {
        "decreasers" => DecreaseAverage::DecreasersOnly,
        "all" => DecreaseAverage::AllPatients,
        other => return Err(Error::InvalidCohort(format!("unknown average {other:?} (decreasers|all)"))),
    };

    let arm = |cohort_path: &Path, fragments_dir: &Path| -> Result<Vec<Trajectory>> {
        let cohort = load_cohort_with_schema(cohort_path)?;
        let fragments = load_fragments(fragments_dir)?;
        let table = fuse(&fragments, &cohort, &FuseLayout::PerVisit)?;
        let mut out = Vec::new();
        for patient in table.patients() {
            out.push(trajectory(&bundle, &table, &patient, target)?);
        }
        Ok(out)
    };
    let treated = arm(treated_cohort, treated_fragments)?;
    let control = arm(control_cohort, control_fragments)?;
    let report = cohort_report(&treated, &control, horizon, average)?;

    mkdir(out)?;
    let mut files = Vec::new();
    let report_path = out.join("treatment_report.json");
    write_json(
        &report_path,
        &serde_json::json!({
            "config_digest": bundle.config_digest,
            "report": report,
        }),
    )?;
    files.push(report_path);
    let treated_csv = out.join("trajectories_treated.csv");
    write_trajectory_csv(&treated, &treated_csv)?;
    files.push(treated_csv);
    let control_csv = out.join("trajectories_control.csv");
    write_trajectory_csv(&control, &control_csv)?;
    files.push(control_csv);
    write_meta(out, "monitor", &bundle.config_digest, &files)?;
    println!("{}", serde_json::to_value(&report)?);
    Ok(())
}
