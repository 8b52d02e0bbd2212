//! Neighborhood gray-tone difference vectors and features.
//!
//! For every voxel with at least one in-ROI 26-neighbor, the absolute
//! difference between its gray level and the mean neighbor level is
//! accumulated into `s_i`; voxels without neighbors are excluded from
//! `n_i` entirely. Coarseness is capped at 1e6 when the weighted sum
//! vanishes (constant or empty accumulation).

use super::{neighborhood_26, BinGrid, DiscretizedRoi, FeatureMap, MatrixKind, TextureMatrix};

pub(crate) const FEATURE_NAMES: [&str; 5] = [
    "ngtdm_coarseness",
    "ngtdm_contrast",
    "ngtdm_busyness",
    "ngtdm_complexity",
    "ngtdm_strength",
];

pub(crate) const COARSENESS_CAP: f64 = 1e6;

/// Per-level vectors as a 3-column matrix: col 0 = n_i, col 1 = s_i,
/// col 2 = p_i. `normalization` is the number of counted voxels.
pub fn ngtdm_matrix(d: &DiscretizedRoi) -> TextureMatrix {
    let ng = d.bin_count;
    let grid = BinGrid::new(d);
    let offsets = neighborhood_26();
    let mut m = TextureMatrix::zeros(MatrixKind::Ngtdm, ng, 3);
    let mut total = 0.0;
    for (t, &(i, j, k)) in d.roi.voxel_coords.iter().enumerate() {
        let bin = d.bin_index[t];
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(dx, dy, dz) in &offsets {
            if let Some(nb) = grid.bin(i as i64 + dx, j as i64 + dy, k as i64 + dz) {
                sum += nb as f64;
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        m.add((bin - 1) as usize, 0, 1.0);
        m.add((bin - 1) as usize, 1, (bin as f64 - mean).abs());
        total += 1.0;
    }
    m.normalization = total;
    if total > 0.0 {
        for level in 0..ng {
            let p = m.at(level, 0) / total;
            m.add(level, 2, p);
        }
    }
    m
}

pub fn ngtdm_features(d: &DiscretizedRoi) -> FeatureMap {
    let m = ngtdm_matrix(d);
    let ng = m.rows;
    let n = m.normalization;
    let mut map = FeatureMap::new();
    if n == 0.0 {
        map.push("ngtdm_coarseness", COARSENESS_CAP);
        map.push("ngtdm_contrast", 0.0);
        map.push("ngtdm_busyness", 0.0);
        map.push("ngtdm_complexity", 0.0);
        map.push("ngtdm_strength", 0.0);
        return map;
    }
    let levels: Vec<usize> = (0..ng).filter(|&i| m.at(i, 0) > 0.0).collect();
    let ngp = levels.len() as f64;
    let s_total: f64 = (0..ng).map(|i| m.at(i, 1)).sum();
    let ps_total: f64 = levels.iter().map(|&i| m.at(i, 2) * m.at(i, 1)).sum();

    let coarseness = if ps_total > 0.0 { (1.0 / ps_total).min(COARSENESS_CAP) } else { COARSENESS_CAP };

    let mut contrast = 0.0;
    let mut busyness_denom = 0.0;
    let mut complexity = 0.0;
    let mut strength_num = 0.0;
    for &i in &levels {
        let (pi, si) = (m.at(i, 2), m.at(i, 1));
        let fi = (i + 1) as f64;
        for &j in &levels {
            let (pj, sj) = (m.at(j, 2), m.at(j, 1));
            let fj = (j + 1) as f64;
            contrast += pi * pj * (fi - fj).powi(2);
            busyness_denom += (fi * pi - fj * pj).abs();
            complexity += (fi - fj).abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * (fi - fj).powi(2);
        }
    }
    let contrast = if ngp > 1.0 { contrast / (ngp * (ngp - 1.0)) * (s_total / n) } else { 0.0 };
    let busyness = if busyness_denom > 0.0 { ps_total / busyness_denom } else { 0.0 };
    let complexity = complexity / n;
    let strength = if s_total > 0.0 { strength_num / s_total } else { 0.0 };

    map.push("ngtdm_coarseness", coarseness);
    map.push("ngtdm_contrast", contrast);
    map.push("ngtdm_busyness", busyness);
    map.push("ngtdm_complexity", complexity);
    map.push("ngtdm_strength", strength);
    map
}
