//! Gray-level dependence matrix and its feature set.
//!
//! A 26-neighbor is dependent on the center voxel iff the absolute bin
//! difference is at most `alpha`. A voxel with dependence count `d` is
//! stored in column `d + 1` (1-based), so the emphasis weights use
//! `j = d + 1`.

use super::{glrlm::weighted_sums, neighborhood_26, BinGrid, DiscretizedRoi, FeatureMap, MatrixKind, TextureMatrix};

pub(crate) const FEATURE_NAMES: [&str; 14] = [
    "gldm_sde",
    "gldm_lde",
    "gldm_gln",
    "gldm_dn",
    "gldm_dnn",
    "gldm_glv",
    "gldm_dv",
    "gldm_de",
    "gldm_lgle",
    "gldm_hgle",
    "gldm_sdlgle",
    "gldm_sdhgle",
    "gldm_ldlgle",
    "gldm_ldhgle",
];

/// Dependence counts; row = gray level - 1, column = dependence count.
pub fn gldm_matrix(d: &DiscretizedRoi, alpha: f64) -> TextureMatrix {
    assert!(alpha >= 0.0, "alpha must be non-negative");
    let ng = d.bin_count;
    let grid = BinGrid::new(d);
    let offsets = neighborhood_26();
    let mut deps: Vec<(u32, usize)> = Vec::with_capacity(d.roi.voxel_coords.len());
    let mut max_dep = 0usize;
    for (t, &(i, j, k)) in d.roi.voxel_coords.iter().enumerate() {
        let bin = d.bin_index[t];
        let mut count = 0usize;
        for &(dx, dy, dz) in &offsets {
            if let Some(nb) = grid.bin(i as i64 + dx, j as i64 + dy, k as i64 + dz) {
                if (nb as f64 - bin as f64).abs() <= alpha {
                    count += 1;
                }
            }
        }
        max_dep = max_dep.max(count);
        deps.push((bin, count));
    }
    let mut m = TextureMatrix::zeros(MatrixKind::Gldm, ng, max_dep + 1);
    for (bin, count) in deps {
        m.add((bin - 1) as usize, count, 1.0);
    }
    m.normalization = m.counts.iter().sum();
    m
}

pub fn gldm_features(d: &DiscretizedRoi, alpha: f64) -> FeatureMap {
    let m = gldm_matrix(d, alpha);
    let nz = m.normalization;
    let s = weighted_sums(&m);
    let mut map = FeatureMap::new();
    map.push("gldm_sde", s.short / nz);
    map.push("gldm_lde", s.long / nz);
    map.push("gldm_gln", s.row_sq / nz);
    map.push("gldm_dn", s.col_sq / nz);
    map.push("gldm_dnn", s.col_sq / (nz * nz));
    map.push("gldm_glv", s.var_i);
    map.push("gldm_dv", s.var_j);
    map.push("gldm_de", s.entropy);
    map.push("gldm_lgle", s.low / nz);
    map.push("gldm_hgle", s.high / nz);
    map.push("gldm_sdlgle", s.short_low / nz);
    map.push("gldm_sdhgle", s.short_high / nz);
    map.push("gldm_ldlgle", s.long_low / nz);
    map.push("gldm_ldhgle", s.long_high / nz);
    map
}
