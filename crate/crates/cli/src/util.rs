//! Shared command helpers: fragment-directory I/O and artifact metadata.

use std::collections::BTreeMap;
use std::path::Path;

use brainomics::error::{Error, Result};
use brainomics::radiomics::read_fragment_csv;
use brainomics::sha256_hex;
use brainomics::tabular::{load_cohort, Cohort, FuseLayout, KeyedFragment};

/// Parse `<patient>_m<visit>` scan stems.
pub fn parse_scan_stem(stem: &str) -> Option<(String, i32)> {
    let pos = stem.rfind("_m")?;
    let visit: i32 = stem[pos + 2..].parse().ok()?;
    if stem[..pos].is_empty() {
        return None;
    }
    Some((stem[..pos].to_string(), visit))
}

/// Strip any supported volume extension, returning the scan stem.
pub fn scan_stem(file_name: &str) -> Option<&str> {
    for ext in [".vol.json", ".nii.gz", ".nii"] {
        if let Some(stem) = file_name.strip_suffix(ext) {
            return Some(stem);
        }
    }
    None
}

/// Load every `<patient>_m<visit>.features.csv` in a fragments directory.
pub fn load_fragments(dir: &Path) -> Result<Vec<KeyedFragment>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".features.csv"))
        .collect();
    names.sort();
    for name in names {
        let stem = name.trim_end_matches(".features.csv");
        let (patient_id, visit_month) = parse_scan_stem(stem).ok_or_else(|| {
            Error::InvalidCohort(format!("fragment file {name} is not named <patient>_m<visit>.features.csv"))
        })?;
        let fragment = read_fragment_csv(&dir.join(&name))?;
        out.push(KeyedFragment { patient_id, visit_month, fragment });
    }
    Ok(out)
}

/// Cohort CSV plus its `<name>.schema.json` sidecar.
pub fn load_cohort_with_schema(csv_path: &Path) -> Result<Cohort> {
    let schema_path = csv_path.with_extension("schema.json");
    load_cohort(csv_path, &schema_path)
}

pub fn parse_layout(layout: &str) -> Result<FuseLayout> {
    match layout {
        "per-visit" => Ok(FuseLayout::PerVisit),
        "wide" => Ok(FuseLayout::wide_all_visits()),
        other => Err(Error::InvalidCohort(format!("unknown layout {other:?} (per-visit|wide)"))),
    }
}

pub fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value).map_err(Error::from)?)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Per-directory artifact metadata: the config digest plus a SHA-256 per
/// produced file, written as `<command>_meta.json`.
pub fn write_meta(out_dir: &Path, command: &str, config_digest: &str, files: &[std::path::PathBuf]) -> Result<()> {
    let mut digests: BTreeMap<String, String> = BTreeMap::new();
    for path in files {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let rel = path.strip_prefix(out_dir).unwrap_or(path);
        digests.insert(rel.to_string_lossy().into_owned(), sha256_hex(&bytes));
    }
    let meta = serde_json::json!({
        "command": command,
        "config_digest": config_digest,
        "files": digests,
    });
    write_json(&out_dir.join(format!("{command}_meta.json")), &meta)
}
