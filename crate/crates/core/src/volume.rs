//! 3D volume and label-mask I/O plus per-structure region carving.
//!
//! Two on-disk formats are supported (documented in `docs/file_formats.md`):
//!
//! * a NIfTI-1 single-file subset — 348-byte header, magic `n+1\0`,
//!   optional gzip stream, datatypes u8/i16/i32/f32/f64, `scl_slope`
//!   / `scl_inter` applied, first three dims only;
//! * a raw format — `<name>.vol.json` sidecar (dims, spacing, dtype)
//!   plus `<name>.vol.bin` little-endian f64 payload — trivially
//!   writable by the synthetic generator and tests.
//!
//! Orientation and affine matrices are ignored beyond voxel spacing:
//! everything downstream operates per structure and never compares
//! across coordinate frames.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D scalar voxel grid with anisotropic physical spacing.
///
/// `data` is stored x-fastest row-major: index `i + nx*(j + ny*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub dims: (usize, usize, usize),
    /// Millimetres per voxel along each axis; strictly positive.
    pub spacing: (f64, f64, f64),
    pub data: Vec<f64>,
}

impl Volume3D {
    pub fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Vec<f64>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(Error::CorruptHeader(format!("non-positive dims {dims:?}")));
        }
        if data.len() != n {
            return Err(Error::CorruptHeader(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                dims.0,
                dims.1,
                dims.2
            )));
        }
        for s in [spacing.0, spacing.1, spacing.2] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::CorruptHeader(format!("non-positive spacing {spacing:?}")));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData("<memory>".into()));
        }
        Ok(Volume3D { dims, spacing, data })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }
}

/// Integer-labelled voxel grid aligned to a companion [`Volume3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub dims: (usize, usize, usize),
    pub labels: Vec<u32>,
    /// Sorted distinct nonzero labels present in `labels`.
    pub label_set: Vec<u32>,
}

impl LabelMask {
    pub fn new(dims: (usize, usize, usize), labels: Vec<u32>) -> Result<Self> {
        if labels.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::CorruptHeader(format!(
                "label count {} != {}x{}x{}",
                labels.len(),
                dims.0,
                dims.1,
                dims.2
            )));
        }
        let mut set: Vec<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
        set.sort_unstable();
        set.dedup();
        Ok(LabelMask { dims, labels, label_set: set })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> u32 {
        self.labels[i + self.dims.0 * (j + self.dims.1 * k)]
    }
}

/// The voxel set of one labelled structure: coordinates, matching
/// intensities, and the inherited physical spacing.
///
/// Coordinates are kept in lexicographic (k, j, i) order — k slowest —
/// so extraction output is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOfInterest {
    pub label: u32,
    pub voxel_coords: Vec<(usize, usize, usize)>,
    pub intensities: Vec<f64>,
    pub spacing: (f64, f64, f64),
}

impl RegionOfInterest {
    pub fn len(&self) -> usize {
        self.voxel_coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_coords.is_empty()
    }
}

/// All voxels of `mask` carrying `label`, paired with the volume values.
pub fn extract_roi(vol: &Volume3D, mask: &LabelMask, label: u32) -> Result<RegionOfInterest> {
    if vol.dims != mask.dims {
        return Err(Error::DimsMismatch { vol: vol.dims, mask: mask.dims });
    }
    if !mask.label_set.contains(&label) {
        return Err(Error::LabelAbsent(label));
    }
    let (nx, ny, nz) = vol.dims;
    let mut coords = Vec::new();
    let mut vals = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if mask.at(i, j, k) == label {
                    coords.push((i, j, k));
                    vals.push(vol.at(i, j, k));
                }
            }
        }
    }
    Ok(RegionOfInterest { label, voxel_coords: coords, intensities: vals, spacing: vol.spacing })
}

// ---------------------------------------------------------------------------
// Raw format: <name>.vol.json + <name>.vol.bin
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawSidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    dtype: String,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn raw_bin_path(json_path: &Path) -> std::path::PathBuf {
    let s = json_path.to_string_lossy();
    std::path::PathBuf::from(s.strip_suffix(".json").map(|p| format!("{p}.bin")).unwrap_or_else(|| format!("{s}.bin")))
}

fn load_raw_payload(path: &Path) -> Result<(RawSidecar, Vec<f64>)> {
    let sidecar: RawSidecar = serde_json::from_slice(&read_bytes(path)?)?;
    if sidecar.dtype != "f64" {
        return Err(Error::UnsupportedFormat(format!("raw dtype {:?}", sidecar.dtype)));
    }
    if sidecar.dims.iter().any(|&d| d == 0) {
        return Err(Error::CorruptHeader(format!("raw dims {:?}", sidecar.dims)));
    }
    let n = sidecar.dims[0] * sidecar.dims[1] * sidecar.dims[2];
    let bin = read_bytes(&raw_bin_path(path))?;
    if bin.len() != n * 8 {
        return Err(Error::CorruptHeader(format!(
            "payload {} bytes, header promises {}",
            bin.len(),
            n * 8
        )));
    }
    let data: Vec<f64> = bin.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((sidecar, data))
}

/// Write a volume in the raw format. Returns the sidecar path.
pub fn write_raw_volume(vol: &Volume3D, dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let sidecar = RawSidecar {
        dims: [vol.dims.0, vol.dims.1, vol.dims.2],
        spacing: [vol.spacing.0, vol.spacing.1, vol.spacing.2],
        dtype: "f64".into(),
    };
    let json_path = dir.join(format!("{name}.vol.json"));
    let bin_path = dir.join(format!("{name}.vol.bin"));
    let mut payload = Vec::with_capacity(vol.data.len() * 8);
    for v in &vol.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    std::fs::write(&bin_path, payload).map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    Ok(json_path)
}

/// Write a label mask in the raw format (labels stored as f64).
pub fn write_raw_mask(mask: &LabelMask, dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let vol = Volume3D {
        dims: mask.dims,
        spacing: (1.0, 1.0, 1.0),
        data: mask.labels.iter().map(|&l| l as f64).collect(),
    };
    write_raw_volume(&vol, dir, name)
}

// ---------------------------------------------------------------------------
// NIfTI-1 subset
// ---------------------------------------------------------------------------

const NIFTI_HEADER_SIZE: usize = 348;

struct NiftiHeader {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    datatype: i16,
    vox_offset: usize,
    scl_slope: f64,
    scl_inter: f64,
    swapped: bool,
}

fn maybe_gunzip(path: &Path, bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn parse_nifti_header(bytes: &[u8], path: &Path) -> Result<NiftiHeader> {
    if bytes.len() < NIFTI_HEADER_SIZE {
        return Err(Error::CorruptHeader(format!(
            "{}: {} bytes, need at least {NIFTI_HEADER_SIZE}",
            path.display(),
            bytes.len()
        )));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let swapped = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: sizeof_hdr {le} != 348",
                path.display()
            )))
        }
    };
    let i16_at = |off: usize| -> i16 {
        let b: [u8; 2] = bytes[off..off + 2].try_into().unwrap();
        if swapped { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }
    };
    let f32_at = |off: usize| -> f32 {
        let b: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
        if swapped { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }
    };
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::UnsupportedFormat(format!(
            "{}: magic {:?} != \"n+1\\0\"",
            path.display(),
            &bytes[344..348]
        )));
    }
    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::CorruptHeader(format!("{}: dim[0] = {ndim}", path.display())));
    }
    let mut dim = [1i16; 7];
    for (t, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        *d = i16_at(40 + 2 * (t + 1));
    }
    // Trailing singleton dims are tolerated; true 4D+ volumes are not.
    for (t, &d) in dim.iter().enumerate() {
        if t >= 3 && d > 1 {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {}-D volume (dim[{}] = {d})",
                path.display(),
                ndim,
                t + 1
            )));
        }
        if d <= 0 {
            return Err(Error::CorruptHeader(format!(
                "{}: dim[{}] = {d}",
                path.display(),
                t + 1
            )));
        }
    }
    let mut spacing = [1.0f64; 3];
    for (t, s) in spacing.iter_mut().enumerate() {
        let p = f32_at(76 + 4 * (t + 1)) as f64;
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::CorruptHeader(format!(
                "{}: pixdim[{}] = {p}",
                path.display(),
                t + 1
            )));
        }
        *s = p;
    }
    let datatype = i16_at(70);
    let vox_offset = f32_at(108);
    if !vox_offset.is_finite() || (vox_offset as i64) < NIFTI_HEADER_SIZE as i64 {
        return Err(Error::CorruptHeader(format!(
            "{}: vox_offset {vox_offset}",
            path.display()
        )));
    }
    // scl_slope of 0 means "no scaling" by common-practice convention.
    let raw_slope = f32_at(112) as f64;
    let scl_slope = if raw_slope == 0.0 { 1.0 } else { raw_slope };
    let scl_inter = f32_at(116) as f64;
    Ok(NiftiHeader {
        dims: (dim[0] as usize, dim[1] as usize, dim[2] as usize),
        spacing: (spacing[0], spacing[1], spacing[2]),
        datatype,
        vox_offset: vox_offset as usize,
        scl_slope,
        scl_inter,
        swapped,
    })
}

fn decode_nifti_data(hdr: &NiftiHeader, bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    let n = hdr.dims.0 * hdr.dims.1 * hdr.dims.2;
    let elem = match hdr.datatype {
        2 => 1,  // u8
        4 => 2,  // i16
        8 => 4,  // i32
        16 => 4, // f32
        64 => 8, // f64
        dt => return Err(Error::UnsupportedFormat(format!("{}: datatype {dt}", path.display()))),
    };
    let start = hdr.vox_offset;
    let need = start + n * elem;
    if bytes.len() < need {
        return Err(Error::CorruptHeader(format!(
            "{}: {} bytes, header promises {need}",
            path.display(),
            bytes.len()
        )));
    }
    let raw = &bytes[start..need];
    let sw = hdr.swapped;
    let mut out = Vec::with_capacity(n);
    match hdr.datatype {
        2 => out.extend(raw.iter().map(|&b| b as f64)),
        4 => out.extend(raw.chunks_exact(2).map(|c| {
            let b: [u8; 2] = c.try_into().unwrap();
            (if sw { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }) as f64
        })),
        8 => out.extend(raw.chunks_exact(4).map(|c| {
            let b: [u8; 4] = c.try_into().unwrap();
            (if sw { i32::from_be_bytes(b) } else { i32::from_le_bytes(b) }) as f64
        })),
        16 => out.extend(raw.chunks_exact(4).map(|c| {
            let b: [u8; 4] = c.try_into().unwrap();
            (if sw { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }) as f64
        })),
        64 => out.extend(raw.chunks_exact(8).map(|c| {
            let b: [u8; 8] = c.try_into().unwrap();
            if sw { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) }
        })),
        _ => unreachable!(),
    }
    for v in &mut out {
        *v = hdr.scl_slope * *v + hdr.scl_inter;
    }
    Ok(out)
}

fn is_raw_path(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".vol.json")
}

fn is_nifti_path(path: &Path) -> bool {
    let s = path.to_string_lossy();
    s.ends_with(".nii") || s.ends_with(".nii.gz")
}

fn load_scalar_grid(path: &Path) -> Result<((usize, usize, usize), (f64, f64, f64), Vec<f64>)> {
    if is_raw_path(path) {
        let (sidecar, data) = load_raw_payload(path)?;
        for s in sidecar.spacing {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::CorruptHeader(format!("raw spacing {:?}", sidecar.spacing)));
            }
        }
        Ok((
            (sidecar.dims[0], sidecar.dims[1], sidecar.dims[2]),
            (sidecar.spacing[0], sidecar.spacing[1], sidecar.spacing[2]),
            data,
        ))
    } else if is_nifti_path(path) {
        let bytes = maybe_gunzip(path, read_bytes(path)?)?;
        let hdr = parse_nifti_header(&bytes, path)?;
        let data = decode_nifti_data(&hdr, &bytes, path)?;
        Ok((hdr.dims, hdr.spacing, data))
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: expected .vol.json, .nii, or .nii.gz",
            path.display()
        )))
    }
}

/// Load a volume from either supported on-disk format, applying header
/// scale/intercept to the stored values.
pub fn load_volume(path: &Path) -> Result<Volume3D> {
    let (dims, spacing, data) = load_scalar_grid(path)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData(path.display().to_string()));
    }
    Volume3D::new(dims, spacing, data)
}

/// Load a label mask; stored values must be integral after scaling
/// (fractional part within 1e-6) and non-negative.
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let (dims, _spacing, data) = load_scalar_grid(path)?;
    let mut labels = Vec::with_capacity(data.len());
    for &v in &data {
        if !v.is_finite() {
            return Err(Error::NonFiniteData(path.display().to_string()));
        }
        let r = v.round();
        if (v - r).abs() > 1e-6 || r < 0.0 || r > u32::MAX as f64 {
            return Err(Error::NonIntegerLabels { path: path.display().to_string(), value: v });
        }
        labels.push(r as u32);
    }
    LabelMask::new(dims, labels)
}
