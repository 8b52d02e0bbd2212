//! Pipeline configuration file: paths, stage settings, and the
//! experiment matrix. The canonical-JSON digest of the parsed config is
//! embedded in every output artifact.

use serde::{Deserialize, Serialize};

use brainomics::eval::{ExperimentSpec, PipelineSettings};
use brainomics::radiomics::RadiomicsConfig;
use brainomics::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPaths {
    pub cohort: std::path::PathBuf,
    pub fragments: std::path::PathBuf,
    pub out: std::path::PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: ConfigPaths,
    #[serde(default)]
    pub radiomics: RadiomicsConfig,
    #[serde(default)]
    pub settings: PipelineSettings,
    pub experiments: Vec<ExperimentSpec>,
    pub seed: u64,
}

impl PipelineConfig {
    /// Stable hash of the canonical (re-serialized) JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// The full 5 class-filters x 2 modalities x 2 timepoint matrix,
    /// optionally doubled with ablated variants.
    pub fn full_matrix(seed: u64, include_ablation: bool) -> Vec<ExperimentSpec> {
        use brainomics::eval::{ClassFilter, Modality, Timepoints};
        let mut out = Vec::new();
        for class_filter in ClassFilter::ALL {
            for modality in [Modality::MriOnly, Modality::MultiOmics] {
                for timepoints in [Timepoints::AllVisits, Timepoints::Month0] {
                    out.push(ExperimentSpec { class_filter, modality, timepoints, dfg_enabled: true, seed });
                    if include_ablation {
                        out.push(ExperimentSpec {
                            class_filter,
                            modality,
                            timepoints,
                            dfg_enabled: false,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}
