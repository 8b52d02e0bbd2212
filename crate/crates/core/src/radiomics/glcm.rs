//! Gray-level co-occurrence matrix and its feature set.

use crate::error::{Error, Result};

use super::{BinGrid, DiscretizedRoi, FeatureMap, MatrixKind, TextureMatrix, DIRECTIONS_13};

pub(crate) const FEATURE_NAMES: [&str; 23] = [
    "glcm_autocorrelation",
    "glcm_joint_average",
    "glcm_cluster_prominence",
    "glcm_cluster_shade",
    "glcm_cluster_tendency",
    "glcm_contrast",
    "glcm_correlation",
    "glcm_difference_average",
    "glcm_difference_entropy",
    "glcm_difference_variance",
    "glcm_joint_energy",
    "glcm_joint_entropy",
    "glcm_imc1",
    "glcm_imc2",
    "glcm_idm",
    "glcm_idmn",
    "glcm_id",
    "glcm_idn",
    "glcm_inverse_variance",
    "glcm_maximum_probability",
    "glcm_sum_average",
    "glcm_sum_entropy",
    "glcm_sum_squares",
];

/// Co-occurrences over the 13 unique directions at the given distance,
/// symmetrized (each pair increments both (a,b) and (b,a)), both voxels
/// inside the ROI. `normalization` is the total symmetrized pair mass.
pub fn glcm_matrix(d: &DiscretizedRoi, distance: usize) -> TextureMatrix {
    assert!(distance >= 1, "distance must be at least 1");
    let ng = d.bin_count;
    let grid = BinGrid::new(d);
    let mut m = TextureMatrix::zeros(MatrixKind::Glcm, ng, ng);
    let dist = distance as i64;
    for (t, &(i, j, k)) in d.roi.voxel_coords.iter().enumerate() {
        let a = d.bin_index[t];
        for &(dx, dy, dz) in &DIRECTIONS_13 {
            if let Some(b) = grid.bin(i as i64 + dx * dist, j as i64 + dy * dist, k as i64 + dz * dist) {
                m.add((a - 1) as usize, (b - 1) as usize, 1.0);
                m.add((b - 1) as usize, (a - 1) as usize, 1.0);
            }
        }
    }
    m.normalization = m.counts.iter().sum();
    m
}

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// The 23-feature GLCM set. A matrix with no pairs (single-voxel ROI)
/// yields all-zero features; the maximal correlation coefficient is
/// replaced by maximum probability throughout the catalog.
pub fn glcm_features(m: &TextureMatrix) -> Result<FeatureMap> {
    if m.kind != MatrixKind::Glcm {
        return Err(Error::WrongMatrixKind { expected: "GLCM", got: m.kind.name() });
    }
    let ng = m.rows;
    let mut map = FeatureMap::new();
    if m.normalization <= 0.0 {
        for name in FEATURE_NAMES {
            map.push(name, 0.0);
        }
        return Ok(map);
    }
    let p = m.normalized();
    let at = |i: usize, j: usize| p[i * ng + j];

    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut pxy_sum = vec![0.0; 2 * ng + 1]; // indexed by i+j (levels 1-based)
    let mut pxy_diff = vec![0.0; ng]; // indexed by |i-j|
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            px[i] += v;
            py[j] += v;
            pxy_sum[i + j + 2] += v;
            pxy_diff[i.abs_diff(j)] += v;
        }
    }
    let mu_x: f64 = px.iter().enumerate().map(|(i, &v)| (i + 1) as f64 * v).sum();
    let mu_y: f64 = py.iter().enumerate().map(|(j, &v)| (j + 1) as f64 * v).sum();
    let var_x: f64 = px.iter().enumerate().map(|(i, &v)| ((i + 1) as f64 - mu_x).powi(2) * v).sum();
    let var_y: f64 = py.iter().enumerate().map(|(j, &v)| ((j + 1) as f64 - mu_y).powi(2) * v).sum();

    let mut autocorrelation = 0.0;
    let mut cluster_prominence = 0.0;
    let mut cluster_shade = 0.0;
    let mut cluster_tendency = 0.0;
    let mut contrast = 0.0;
    let mut joint_energy = 0.0;
    let mut joint_entropy = 0.0;
    let mut idm = 0.0;
    let mut idmn = 0.0;
    let mut id = 0.0;
    let mut idn = 0.0;
    let mut inverse_variance = 0.0;
    let mut maximum_probability = 0.0f64;
    let mut sum_squares = 0.0;
    let mut hxy1 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            let (fi, fj) = ((i + 1) as f64, (j + 1) as f64);
            autocorrelation += fi * fj * v;
            let cdev = fi + fj - mu_x - mu_y;
            cluster_prominence += cdev.powi(4) * v;
            cluster_shade += cdev.powi(3) * v;
            cluster_tendency += cdev.powi(2) * v;
            contrast += (fi - fj).powi(2) * v;
            joint_energy += v * v;
            joint_entropy -= xlog2(v);
            let diff = (fi - fj).abs();
            idm += v / (1.0 + diff * diff);
            idmn += v / (1.0 + diff * diff / (ng * ng) as f64);
            id += v / (1.0 + diff);
            idn += v / (1.0 + diff / ng as f64);
            if i != j {
                inverse_variance += v / (diff * diff);
            }
            maximum_probability = maximum_probability.max(v);
            sum_squares += (fi - mu_x).powi(2) * v;
            if v > 0.0 && px[i] > 0.0 && py[j] > 0.0 {
                hxy1 -= v * (px[i] * py[j]).log2();
            }
        }
    }
    let correlation = if var_x > 1e-12 && var_y > 1e-12 {
        (autocorrelation - mu_x * mu_y) / (var_x.sqrt() * var_y.sqrt())
    } else {
        0.0
    };

    let difference_average: f64 = pxy_diff.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    let difference_entropy: f64 = -pxy_diff.iter().map(|&v| xlog2(v)).sum::<f64>();
    let difference_variance: f64 = pxy_diff
        .iter()
        .enumerate()
        .map(|(k, &v)| (k as f64 - difference_average).powi(2) * v)
        .sum();
    let sum_average: f64 = pxy_sum.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    let sum_entropy: f64 = -pxy_sum.iter().map(|&v| xlog2(v)).sum::<f64>();

    let hx: f64 = -px.iter().map(|&v| xlog2(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| xlog2(v)).sum::<f64>();
    let mut hxy2 = 0.0;
    for &pi in &px {
        for &pj in &py {
            hxy2 -= xlog2(pi * pj);
        }
    }
    let imc1 = if hx.max(hy) > 0.0 { (joint_entropy - hxy1) / hx.max(hy) } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - joint_entropy)).exp()).max(0.0).sqrt();

    map.push("glcm_autocorrelation", autocorrelation);
    map.push("glcm_joint_average", mu_x);
    map.push("glcm_cluster_prominence", cluster_prominence);
    map.push("glcm_cluster_shade", cluster_shade);
    map.push("glcm_cluster_tendency", cluster_tendency);
    map.push("glcm_contrast", contrast);
    map.push("glcm_correlation", correlation);
    map.push("glcm_difference_average", difference_average);
    map.push("glcm_difference_entropy", difference_entropy);
    map.push("glcm_difference_variance", difference_variance);
    map.push("glcm_joint_energy", joint_energy);
    map.push("glcm_joint_entropy", joint_entropy);
    map.push("glcm_imc1", imc1);
    map.push("glcm_imc2", imc2);
    map.push("glcm_idm", idm);
    map.push("glcm_idmn", idmn);
    map.push("glcm_id", id);
    map.push("glcm_idn", idn);
    map.push("glcm_inverse_variance", inverse_variance);
    map.push("glcm_maximum_probability", maximum_probability);
    map.push("glcm_sum_average", sum_average);
    map.push("glcm_sum_entropy", sum_entropy);
    map.push("glcm_sum_squares", sum_squares);
    Ok(map)
}
