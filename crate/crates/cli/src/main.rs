//! Pipeline driver: synthesize cohorts, extract radiomics, fuse, select,
//! train, evaluate, explain, and monitor from the command line.
//!
//! Data goes to files; stdout carries machine-readable summaries only and
//! diagnostics go to stderr. Exit codes: 0 success, 2 I/O or format
//! error, 3 spec/cohort mismatch, 4 missing timepoints.

mod commands;
mod config;
mod util;

use clap::{Parser, Subcommand};

use brainomics::Error;

#[derive(Parser)]
#[command(name = "brainomics", version, about = "Dementia-subtyping pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (volumes, masks, cohort CSV, manifest).
    Synth {
        /// SynthSpec JSON path, or a preset name: "strong" | "null".
        #[arg(long, default_value = "strong")]
        spec: String,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit treated/control MCI sub-cohorts instead of the four-class cohort.
        #[arg(long)]
        treated_pair: bool,
    },
    /// Extract per-structure radiomics fragments from volume/mask pairs.
    Extract {
        #[arg(long)]
        volumes: std::path::PathBuf,
        #[arg(long)]
        masks: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// RadiomicsConfig JSON path (defaults documented in docs/configuration.md).
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        /// Worker threads for parallel extraction (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Fuse radiomics fragments with the cohort table and write the fused CSV.
    Preprocess {
        #[arg(long)]
        cohort: std::path::PathBuf,
        #[arg(long)]
        fragments: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Fuse layout: "per-visit" or "wide".
        #[arg(long, default_value = "per-visit")]
        layout: String,
    },
    /// Run the multicollinearity selector on the fused table and write the audit JSON.
    Select {
        #[arg(long)]
        cohort: std::path::PathBuf,
        #[arg(long)]
        fragments: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long, default_value = "per-visit")]
        layout: String,
        #[arg(long, default_value_t = brainomics::select::DEFAULT_CORR_THRESHOLD)]
        corr_threshold: f64,
        #[arg(long, default_value_t = brainomics::select::DEFAULT_MI_BINS)]
        mi_bins: usize,
    },
    /// Train a model bundle on the full given cohort.
    Train {
        #[arg(long)]
        cohort: std::path::PathBuf,
        #[arg(long)]
        fragments: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Comma-separated class list, e.g. "MCI,CTL".
        #[arg(long, default_value = "AD,VaD,MCI,CTL")]
        classes: String,
        #[arg(long, default_value = "per-visit")]
        layout: String,
        /// "mri" or "multi-omics".
        #[arg(long, default_value = "multi-omics")]
        modality: String,
        /// PipelineSettings JSON path (defaults when omitted).
        #[arg(long)]
        settings: Option<std::path::PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute every experiment in a pipeline config and write reports.
    Run {
        /// PipelineConfig JSON path.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the config's experiment list with the full
        /// class-filter x modality x timepoint matrix.
        #[arg(long)]
        full_matrix: bool,
        /// With --full-matrix, also run every ablated (no-DFG) variant.
        #[arg(long)]
        with_ablation: bool,
    },
    /// Permutation feature importance for a trained bundle.
    Importance {
        #[arg(long)]
        model: std::path::PathBuf,
        #[arg(long)]
        cohort: std::path::PathBuf,
        #[arg(long)]
        fragments: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// "accuracy" or "auc".
        #[arg(long, default_value = "accuracy")]
        metric: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Longitudinal treatment-effect report from a held-out model.
    Monitor {
        #[arg(long)]
        model: std::path::PathBuf,
        #[arg(long)]
        treated_cohort: std::path::PathBuf,
        #[arg(long)]
        treated_fragments: std::path::PathBuf,
        #[arg(long)]
        control_cohort: std::path::PathBuf,
        #[arg(long)]
        control_fragments: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Monitored class.
        #[arg(long, default_value = "MCI")]
        target: String,
        #[arg(long, default_value_t = 12)]
        horizon: i32,
        /// Average decrease over "decreasers" (default) or "all" patients.
        #[arg(long, default_value = "decreasers")]
        average: String,
    },
}

/// Exit-code mapping: I/O and format problems are 2, spec/cohort
/// mismatches 3, missing timepoints 4.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoVisits(_) | Error::MissingTimepoint { .. } => 4,
        Error::UnknownPatient { .. }
        | Error::DuplicateFragment { .. }
        | Error::InconsistentDiagnosis(_)
        | Error::ClassAbsent(_)
        | Error::UnknownDiagnosis(_)
        | Error::InvalidCohort(_)
        | Error::EmptyTrainSet
        | Error::TooFewGroups { .. }
        | Error::SingleClassTrainSet
        | Error::SingleClass => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { spec, out, seed, treated_pair } => commands::cmd_synth(&spec, &out, seed, treated_pair),
        Command::Extract { volumes, masks, out, config, jobs } => {
            commands::cmd_extract(&volumes, &masks, &out, config.as_deref(), jobs)
        }
        Command::Preprocess { cohort, fragments, out, layout } => {
            commands::cmd_preprocess(&cohort, &fragments, &out, &layout)
        }
        Command::Select { cohort, fragments, out, layout, corr_threshold, mi_bins } => {
            commands::cmd_select(&cohort, &fragments, &out, &layout, corr_threshold, mi_bins)
        }
        Command::Train { cohort, fragments, out, classes, layout, modality, settings, seed } => {
            commands::cmd_train(&cohort, &fragments, &out, &classes, &layout, &modality, settings.as_deref(), seed)
        }
        Command::Run { config, out, seed, full_matrix, with_ablation } => {
            commands::cmd_run(&config, out.as_deref(), seed, full_matrix, with_ablation)
        }
        Command::Importance { model, cohort, fragments, out, metric, repeats, seed } => {
            commands::cmd_importance(&model, &cohort, &fragments, &out, &metric, repeats, seed)
        }
        Command::Monitor {
            model,
            treated_cohort,
            treated_fragments,
            control_cohort,
            control_fragments,
            out,
            target,
            horizon,
            average,
        } => commands::cmd_monitor(
            &model,
            &treated_cohort,
            &treated_fragments,
            &control_cohort,
            &control_fragments,
            &out,
            &target,
            horizon,
            &average,
        ),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
