//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- volume I/O ----
    #[error("unsupported volume format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("non-finite voxel data in {0}")]
    NonFiniteData(String),
    #[error("non-integer label value {value} in {path}")]
    NonIntegerLabels { path: String, value: f64 },
    #[error("volume dims {vol:?} do not match mask dims {mask:?}")]
    DimsMismatch { vol: (usize, usize, usize), mask: (usize, usize, usize) },
    #[error("label {0} absent from mask")]
    LabelAbsent(u32),

    // ---- radiomics ----
    #[error("empty region of interest")]
    EmptyRoi,
    #[error("expected {expected} texture matrix, got {got}")]
    WrongMatrixKind { expected: &'static str, got: &'static str },

    // ---- tabular ----
    #[error("expected 30 MMSE item marks, got {0}")]
    WrongItemCount(usize),
    #[error("fragment references unknown patient/visit: {patient} month {visit}")]
    UnknownPatient { patient: String, visit: i32 },
    #[error("duplicate radiomics fragment for {patient} month {visit}")]
    DuplicateFragment { patient: String, visit: i32 },
    #[error("patient {0} has inconsistent diagnoses across visits")]
    InconsistentDiagnosis(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("class {0} absent from training rows")]
    ClassAbsent(String),
    #[error("unknown diagnosis label: {0}")]
    UnknownDiagnosis(String),
    #[error("cohort CSV invalid: {0}")]
    InvalidCohort(String),

    // ---- selection / metrics ----
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("only one class present; metric undefined")]
    SingleClass,
    #[error("fewer distinct groups ({groups}) than folds ({k})")]
    TooFewGroups { groups: usize, k: usize },

    // ---- model ----
    #[error("input width {got} does not match model width {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training set contains a single class")]
    SingleClassTrainSet,
    #[error("model file version {got} unsupported (expected {expected})")]
    ModelVersion { expected: u32, got: u32 },
    #[error("model file invalid: {0}")]
    InvalidModel(String),

    // ---- explain / monitor ----
    #[error("feature name not parseable as a timepointed radiomics column: {0}")]
    UnparseableName(String),
    #[error("trajectory for {0} has no visits")]
    NoVisits(String),
    #[error("trajectory for {patient} missing month {month}")]
    MissingTimepoint { patient: String, month: i32 },

    // ---- synth / config ----
    #[error("invalid synthetic cohort spec: {0}")]
    InvalidSpec(String),

    // ---- plumbing ----
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
