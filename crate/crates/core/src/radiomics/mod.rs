//! Per-structure radiomics feature catalog: shape, first-order, and
//! gray-level texture-matrix features over a [`RegionOfInterest`].
//!
//! The catalog is itemized in `docs/feature_catalog.md`; conventions that
//! the reference literature leaves open are fixed there (equal-width
//! discretization, GLCM distance 1 over 13 unique 3D directions,
//! direction matrices merged by summation, degenerate-case values).

mod firstorder;
mod gldm;
mod glcm;
mod glrlm;
mod glszm;
mod ngtdm;
mod shape;

pub use firstorder::first_order_features;
pub use gldm::{gldm_features, gldm_matrix};
pub use glcm::{glcm_features, glcm_matrix};
pub use glrlm::{glrlm_features, glrlm_matrix};
pub use glszm::{glszm_features, glszm_matrix};
pub use ngtdm::{ngtdm_features, ngtdm_matrix};
pub use shape::shape_features;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{extract_roi, LabelMask, RegionOfInterest, Volume3D};

/// The 13 unique 3D direction offsets (first nonzero component positive):
/// 3 axis, 6 face-diagonal, 4 space-diagonal.
pub(crate) const DIRECTIONS_13: [(i64, i64, i64); 13] = [
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
];

pub(crate) fn neighborhood_26() -> Vec<(i64, i64, i64)> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// An ROI discretized into `bin_count` equal-width gray levels over the
/// intensity range; constant ROIs map every voxel to bin 1.
#[derive(Debug, Clone)]
pub struct DiscretizedRoi {
    pub roi: RegionOfInterest,
    pub bin_count: usize,
    /// Per-voxel bin index in `[1, bin_count]`, aligned with `roi` order.
    pub bin_index: Vec<u32>,
    /// `bin_count + 1` strictly ascending edges spanning the ROI range.
    pub bin_edges: Vec<f64>,
}

pub fn discretize(roi: &RegionOfInterest, bin_count: usize) -> Result<DiscretizedRoi> {
    assert!(bin_count >= 1, "bin_count must be at least 1");
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let min = roi.intensities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = roi.intensities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Degenerate range: unit-width bins keep edges strictly ascending while
    // every voxel lands in bin 1.
    let width = if max > min { (max - min) / bin_count as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bin_count).map(|t| min + width * t as f64).collect();
    let bins: Vec<u32> = roi
        .intensities
        .iter()
        .map(|&x| {
            if max == min {
                1
            } else {
                (((x - min) / width).floor() as usize + 1).min(bin_count) as u32
            }
        })
        .collect();
    Ok(DiscretizedRoi { roi: roi.clone(), bin_count, bin_index: bins, bin_edges: edges })
}

/// Dense lookup of bin indices over the ROI bounding box; 0 marks voxels
/// outside the ROI. Shared by every texture-matrix builder.
pub(crate) struct BinGrid {
    origin: (usize, usize, usize),
    dims: (usize, usize, usize),
    bins: Vec<u32>,
}

impl BinGrid {
    pub(crate) fn new(d: &DiscretizedRoi) -> Self {
        let coords = &d.roi.voxel_coords;
        let min = coords.iter().fold((usize::MAX, usize::MAX, usize::MAX), |a, &(i, j, k)| {
            (a.0.min(i), a.1.min(j), a.2.min(k))
        });
        let max = coords.iter().fold((0, 0, 0), |a: (usize, usize, usize), &(i, j, k)| {
            (a.0.max(i), a.1.max(j), a.2.max(k))
        });
        let dims = (max.0 - min.0 + 1, max.1 - min.1 + 1, max.2 - min.2 + 1);
        let mut bins = vec![0u32; dims.0 * dims.1 * dims.2];
        for (t, &(i, j, k)) in coords.iter().enumerate() {
            let idx = (i - min.0) + dims.0 * ((j - min.1) + dims.1 * (k - min.2));
            bins[idx] = d.bin_index[t];
        }
        BinGrid { origin: min, dims, bins }
    }

    /// Bin at absolute voxel coordinate, or None outside the ROI.
    #[inline]
    pub(crate) fn bin(&self, i: i64, j: i64, k: i64) -> Option<u32> {
        let x = i - self.origin.0 as i64;
        let y = j - self.origin.1 as i64;
        let z = k - self.origin.2 as i64;
        if x < 0 || y < 0 || z < 0 || x >= self.dims.0 as i64 || y >= self.dims.1 as i64 || z >= self.dims.2 as i64 {
            return None;
        }
        let b = self.bins[x as usize + self.dims.0 * (y as usize + self.dims.1 * z as usize)];
        if b == 0 {
            None
        } else {
            Some(b)
        }
    }
}

/// Ordered list of named, finite feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub entries: Vec<(String, f64)>,
}

impl FeatureMap {
    pub fn new() -> Self {
        FeatureMap { entries: Vec::new() }
    }

    pub(crate) fn push(&mut self, name: &str, value: f64) {
        assert!(value.is_finite(), "feature {name} is not finite: {value}");
        debug_assert!(self.entries.iter().all(|(n, _)| n != name), "duplicate feature {name}");
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Glcm,
    Glrlm,
    Glszm,
    Gldm,
    Ngtdm,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Glcm => "GLCM",
            MatrixKind::Glrlm => "GLRLM",
            MatrixKind::Glszm => "GLSZM",
            MatrixKind::Gldm => "GLDM",
            MatrixKind::Ngtdm => "NGTDM",
        }
    }
}

/// Raw texture-matrix accumulation.
///
/// Rows index gray level (1-based level `i` lives in row `i - 1`). Column
/// meaning depends on the kind: co-occurring level (GLCM), run length
/// (GLRLM), zone size (GLSZM), dependence count + 1 (GLDM). For NGTDM the
/// three columns hold the per-level vectors `n_i`, `s_i`, `p_i`.
/// `normalization` is the total mass used to turn counts into
/// probabilities (counted voxels for NGTDM).
#[derive(Debug, Clone, PartialEq)]
pub struct TextureMatrix {
    pub kind: MatrixKind,
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<f64>,
    pub normalization: f64,
}

impl TextureMatrix {
    pub(crate) fn zeros(kind: MatrixKind, rows: usize, cols: usize) -> Self {
        TextureMatrix { kind, rows, cols, counts: vec![0.0; rows.max(1) * cols.max(1)], normalization: 0.0 }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.counts[row * self.cols + col]
    }

    #[inline]
    pub(crate) fn add(&mut self, row: usize, col: usize, v: f64) {
        self.counts[row * self.cols + col] += v;
    }

    /// Probability-normalized cells; all zeros when no mass was observed.
    pub fn normalized(&self) -> Vec<f64> {
        if self.normalization > 0.0 {
            self.counts.iter().map(|&c| c / self.normalization).collect()
        } else {
            vec![0.0; self.counts.len()]
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog and whole-mask extraction
// ---------------------------------------------------------------------------

pub const FAMILY_NAMES: [&str; 7] = ["shape", "firstorder", "glcm", "glrlm", "glszm", "gldm", "ngtdm"];

/// Extraction settings; serialized as JSON (see `docs/configuration.md`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiomicsConfig {
    /// Fixed gray-level count for equal-width discretization.
    pub bin_count: usize,
    /// GLDM dependence cutoff: neighbor dependent iff |bin difference| <= alpha.
    pub gldm_alpha: f64,
    /// Subset of [`FAMILY_NAMES`], in any order.
    pub enabled_families: Vec<String>,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        RadiomicsConfig {
            bin_count: 32,
            gldm_alpha: 0.0,
            enabled_families: FAMILY_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RadiomicsConfig {
    fn family_enabled(&self, f: &str) -> bool {
        self.enabled_families.iter().any(|e| e == f)
    }
}

/// Catalog column names for one structure under `config`, in stable
/// family-then-feature order.
pub fn catalog_names(config: &RadiomicsConfig) -> Vec<String> {
    let mut names = Vec::new();
    if config.family_enabled("shape") {
        names.extend(shape::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("firstorder") {
        names.extend(firstorder::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("glcm") {
        names.extend(glcm::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("glrlm") {
        names.extend(glrlm::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("glszm") {
        names.extend(glszm::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("gldm") {
        names.extend(gldm::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if config.family_enabled("ngtdm") {
        names.extend(ngtdm::FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    names
}

/// Full catalog for a single ROI.
pub fn roi_features(roi: &RegionOfInterest, config: &RadiomicsConfig) -> Result<FeatureMap> {
    let mut map = FeatureMap::new();
    if config.family_enabled("shape") {
        map.entries.extend(shape_features(roi)?.entries);
    }
    if config.family_enabled("firstorder") {
        map.entries.extend(first_order_features(roi, config.bin_count)?.entries);
    }
    let needs_discrete = ["glcm", "glrlm", "glszm", "gldm", "ngtdm"]
        .iter()
        .any(|f| config.family_enabled(f));
    if needs_discrete {
        let d = discretize(roi, config.bin_count)?;
        if config.family_enabled("glcm") {
            let m = glcm_matrix(&d, 1);
            map.entries.extend(glcm_features(&m)?.entries);
        }
        if config.family_enabled("glrlm") {
            map.entries.extend(glrlm_features(&d).entries);
        }
        if config.family_enabled("glszm") {
            map.entries.extend(glszm_features(&d).entries);
        }
        if config.family_enabled("gldm") {
            map.entries.extend(gldm_features(&d, config.gldm_alpha).entries);
        }
        if config.family_enabled("ngtdm") {
            map.entries.extend(ngtdm_features(&d).entries);
        }
    }
    Ok(map)
}

/// One extracted scan: per-structure rows over the catalog columns,
/// sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiomicsFragment {
    pub feature_names: Vec<String>,
    pub rows: Vec<(u32, Vec<f64>)>,
}

/// Extract the full catalog for every labelled structure in the mask.
///
/// Output is deterministic: rows sorted by label, columns in catalog
/// order, independent of thread count.
pub fn extract_all(vol: &Volume3D, mask: &LabelMask, config: &RadiomicsConfig) -> Result<RadiomicsFragment> {
    if vol.dims != mask.dims {
        return Err(Error::DimsMismatch { vol: vol.dims, mask: mask.dims });
    }
    let names = catalog_names(config);
    let mut rows = mask
        .label_set
        .par_iter()
        .map(|&label| {
            let roi = extract_roi(vol, mask, label)?;
            let map = roi_features(&roi, config)?;
            Ok((label, map.entries.into_iter().map(|(_, v)| v).collect::<Vec<f64>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|&(label, _)| label);
    Ok(RadiomicsFragment { feature_names: names, rows })
}

/// Serialize a fragment as CSV with stable header order
/// (`label,<catalog names...>`).
pub fn write_fragment_csv(fragment: &RadiomicsFragment, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    let mut header = vec!["label".to_string()];
    header.extend(fragment.feature_names.iter().cloned());
    w.write_record(&header)?;
    for (label, values) in &fragment.rows {
        let mut rec = vec![label.to_string()];
        rec.extend(values.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_fragment_csv(path: &Path) -> Result<RadiomicsFragment> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let header = r.headers()?.clone();
    if header.is_empty() || &header[0] != "label" {
        return Err(Error::CorruptHeader(format!("{}: fragment CSV must start with 'label'", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label: u32 = rec[0]
            .parse()
            .map_err(|_| Error::CorruptHeader(format!("{}: bad label {:?}", path.display(), &rec[0])))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::CorruptHeader(format!("{}: bad value {s:?}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((label, values));
    }
    Ok(RadiomicsFragment { feature_names: names, rows })
}
