//! Gray-level run-length matrix and its feature set.
//!
//! Maximal runs of equal gray level are counted along each of the 13
//! unique directions; the per-direction matrices are merged by summation
//! before feature computation. Run percentage is therefore normalized by
//! voxel count times direction count.

use super::{BinGrid, DiscretizedRoi, FeatureMap, MatrixKind, TextureMatrix, DIRECTIONS_13};

pub(crate) const FEATURE_NAMES: [&str; 16] = [
    "glrlm_sre",
    "glrlm_lre",
    "glrlm_gln",
    "glrlm_glnn",
    "glrlm_rln",
    "glrlm_rlnn",
    "glrlm_rp",
    "glrlm_glv",
    "glrlm_rv",
    "glrlm_re",
    "glrlm_lglre",
    "glrlm_hglre",
    "glrlm_srlgle",
    "glrlm_srhgle",
    "glrlm_lrlgle",
    "glrlm_lrhgle",
];

/// Merged run-length counts; row = gray level - 1, column = run length - 1.
pub fn glrlm_matrix(d: &DiscretizedRoi) -> TextureMatrix {
    let ng = d.bin_count;
    let grid = BinGrid::new(d);
    let mut runs: Vec<(u32, usize)> = Vec::new();
    let mut max_len = 1;
    for &(dx, dy, dz) in &DIRECTIONS_13 {
        for (t, &(i, j, k)) in d.roi.voxel_coords.iter().enumerate() {
            let bin = d.bin_index[t];
            let (i, j, k) = (i as i64, j as i64, k as i64);
            // Only run starts: the predecessor is outside the ROI or a
            // different gray level.
            if grid.bin(i - dx, j - dy, k - dz) == Some(bin) {
                continue;
            }
            let mut len = 1usize;
            let (mut ci, mut cj, mut ck) = (i + dx, j + dy, k + dz);
            while grid.bin(ci, cj, ck) == Some(bin) {
                len += 1;
                ci += dx;
                cj += dy;
                ck += dz;
            }
            max_len = max_len.max(len);
            runs.push((bin, len));
        }
    }
    let mut m = TextureMatrix::zeros(MatrixKind::Glrlm, ng, max_len);
    for (bin, len) in runs {
        m.add((bin - 1) as usize, len - 1, 1.0);
    }
    m.normalization = m.counts.iter().sum();
    m
}

pub(crate) fn weighted_sums(m: &TextureMatrix) -> FeatureSums {
    let nr = m.normalization;
    let mut s = FeatureSums::default();
    let mut row_tot = vec![0.0; m.rows];
    let mut col_tot = vec![0.0; m.cols];
    for i in 0..m.rows {
        for j in 0..m.cols {
            let c = m.at(i, j);
            if c == 0.0 {
                continue;
            }
            let (fi, fj) = ((i + 1) as f64, (j + 1) as f64);
            row_tot[i] += c;
            col_tot[j] += c;
            s.short += c / (fj * fj);
            s.long += c * fj * fj;
            s.low += c / (fi * fi);
            s.high += c * fi * fi;
            s.short_low += c / (fi * fi * fj * fj);
            s.short_high += c * fi * fi / (fj * fj);
            s.long_low += c * fj * fj / (fi * fi);
            s.long_high += c * fi * fi * fj * fj;
            let p = c / nr;
            s.mu_i += p * fi;
            s.mu_j += p * fj;
            s.entropy -= p * p.log2();
        }
    }
    for i in 0..m.rows {
        for j in 0..m.cols {
            let p = m.at(i, j) / nr;
            if p > 0.0 {
                s.var_i += p * ((i + 1) as f64 - s.mu_i).powi(2);
                s.var_j += p * ((j + 1) as f64 - s.mu_j).powi(2);
            }
        }
    }
    s.row_sq = row_tot.iter().map(|&r| r * r).sum();
    s.col_sq = col_tot.iter().map(|&r| r * r).sum();
    s
}

#[derive(Default)]
pub(crate) struct FeatureSums {
    pub short: f64,
    pub long: f64,
    pub low: f64,
    pub high: f64,
    pub short_low: f64,
    pub short_high: f64,
    pub long_low: f64,
    pub long_high: f64,
    pub mu_i: f64,
    pub mu_j: f64,
    pub var_i: f64,
    pub var_j: f64,
    pub entropy: f64,
    pub row_sq: f64,
    pub col_sq: f64,
}

pub fn glrlm_features(d: &DiscretizedRoi) -> FeatureMap {
    let m = glrlm_matrix(d);
    let nr = m.normalization;
    let np = d.roi.voxel_coords.len() as f64;
    let s = weighted_sums(&m);
    let mut map = FeatureMap::new();
    map.push("glrlm_sre", s.short / nr);
    map.push("glrlm_lre", s.long / nr);
    map.push("glrlm_gln", s.row_sq / nr);
    map.push("glrlm_glnn", s.row_sq / (nr * nr));
    map.push("glrlm_rln", s.col_sq / nr);
    map.push("glrlm_rlnn", s.col_sq / (nr * nr));
    map.push("glrlm_rp", nr / (np * DIRECTIONS_13.len() as f64));
    map.push("glrlm_glv", s.var_i);
    map.push("glrlm_rv", s.var_j);
    map.push("glrlm_re", s.entropy);
    map.push("glrlm_lglre", s.low / nr);
    map.push("glrlm_hglre", s.high / nr);
    map.push("glrlm_srlgle", s.short_low / nr);
    map.push("glrlm_srhgle", s.short_high / nr);
    map.push("glrlm_lrlgle", s.long_low / nr);
    map.push("glrlm_lrhgle", s.long_high / nr);
    map
}
