//! Gray-level size-zone matrix and its feature set.
//!
//! A zone is a 26-connected component of equal gray level; corner contact
//! joins voxels into one zone.

use super::{glrlm::weighted_sums, neighborhood_26, BinGrid, DiscretizedRoi, FeatureMap, MatrixKind, TextureMatrix};

pub(crate) const FEATURE_NAMES: [&str; 16] = [
    "glszm_sae",
    "glszm_lae",
    "glszm_gln",
    "glszm_glnn",
    "glszm_szn",
    "glszm_sznn",
    "glszm_zp",
    "glszm_glv",
    "glszm_zv",
    "glszm_ze",
    "glszm_lglze",
    "glszm_hglze",
    "glszm_salgle",
    "glszm_sahgle",
    "glszm_lalgle",
    "glszm_lahgle",
];

/// Zone counts; row = gray level - 1, column = zone size - 1.
pub fn glszm_matrix(d: &DiscretizedRoi) -> TextureMatrix {
    let ng = d.bin_count;
    let grid = BinGrid::new(d);
    let offsets = neighborhood_26();
    let n = d.roi.voxel_coords.len();
    let mut visited = vec![false; n];
    // Coordinate -> roi index for flood fill bookkeeping.
    let index_of: std::collections::HashMap<(usize, usize, usize), usize> =
        d.roi.voxel_coords.iter().enumerate().map(|(t, &c)| (c, t)).collect();

    let mut zones: Vec<(u32, usize)> = Vec::new();
    let mut max_size = 1;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let bin = d.bin_index[start];
        let mut stack = vec![start];
        visited[start] = true;
        let mut size = 0usize;
        while let Some(t) = stack.pop() {
            size += 1;
            let (i, j, k) = d.roi.voxel_coords[t];
            for &(dx, dy, dz) in &offsets {
                let (ci, cj, ck) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                if grid.bin(ci, cj, ck) == Some(bin) {
                    let key = (ci as usize, cj as usize, ck as usize);
                    let u = index_of[&key];
                    if !visited[u] {
                        visited[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        max_size = max_size.max(size);
        zones.push((bin, size));
    }
    let mut m = TextureMatrix::zeros(MatrixKind::Glszm, ng, max_size);
    for (bin, size) in zones {
        m.add((bin - 1) as usize, size - 1, 1.0);
    }
    m.normalization = m.counts.iter().sum();
    m
}

pub fn glszm_features(d: &DiscretizedRoi) -> FeatureMap {
    let m = glszm_matrix(d);
    let nz = m.normalization;
    let np = d.roi.voxel_coords.len() as f64;
    let s = weighted_sums(&m);
    let mut map = FeatureMap::new();
    map.push("glszm_sae", s.short / nz);
    map.push("glszm_lae", s.long / nz);
    map.push("glszm_gln", s.row_sq / nz);
    map.push("glszm_glnn", s.row_sq / (nz * nz));
    map.push("glszm_szn", s.col_sq / nz);
    map.push("glszm_sznn", s.col_sq / (nz * nz));
    map.push("glszm_zp", nz / np);
    map.push("glszm_glv", s.var_i);
    map.push("glszm_zv", s.var_j);
    map.push("glszm_ze", s.entropy);
    map.push("glszm_lglze", s.low / nz);
    map.push("glszm_hglze", s.high / nz);
    map.push("glszm_salgle", s.short_low / nz);
    map.push("glszm_sahgle", s.short_high / nz);
    map.push("glszm_lalgle", s.long_low / nz);
    map.push("glszm_lahgle", s.long_high / nz);
    map
}
