//! Voxel-wise 3D shape descriptors.
//!
//! Surface area comes from exposed-face counting: every voxel face not
//! shared with another ROI voxel contributes its physical face area.
//! Axis lengths come from the population covariance of physical voxel
//! centers (4 * sqrt(eigenvalue)); degenerate covariances (single voxel,
//! collinear sets) give elongation = flatness = 1 by convention.

use std::collections::HashSet;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::volume::RegionOfInterest;

use super::FeatureMap;

pub(crate) const FEATURE_NAMES: [&str; 16] = [
    "shape_voxel_volume",
    "shape_surface_area",
    "shape_surface_volume_ratio",
    "shape_sphericity",
    "shape_compactness1",
    "shape_compactness2",
    "shape_spherical_disproportion",
    "shape_max_3d_diameter",
    "shape_major_axis",
    "shape_minor_axis",
    "shape_least_axis",
    "shape_elongation",
    "shape_flatness",
    "shape_max_2d_diameter_slice",
    "shape_max_2d_diameter_column",
    "shape_max_2d_diameter_row",
];

fn max_pairwise(points: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let dx = points[a].0 - points[b].0;
            let dy = points[a].1 - points[b].1;
            best = best.max(dx * dx + dy * dy);
        }
    }
    best.sqrt()
}

/// Max in-plane diameter over all slices perpendicular to one axis.
fn max_2d_diameter(
    coords: &[(usize, usize, usize)],
    group_axis: fn(&(usize, usize, usize)) -> usize,
    project: impl Fn(&(usize, usize, usize)) -> (f64, f64),
) -> f64 {
    let mut groups: std::collections::BTreeMap<usize, Vec<(f64, f64)>> = std::collections::BTreeMap::new();
    for c in coords {
        groups.entry(group_axis(c)).or_default().push(project(c));
    }
    groups.values().map(|pts| max_pairwise(pts)).fold(0.0, f64::max)
}

pub fn shape_features(roi: &RegionOfInterest) -> Result<FeatureMap> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let (sx, sy, sz) = roi.spacing;
    let n = roi.voxel_coords.len();
    let volume = n as f64 * sx * sy * sz;

    let occupied: HashSet<(i64, i64, i64)> =
        roi.voxel_coords.iter().map(|&(i, j, k)| (i as i64, j as i64, k as i64)).collect();
    let face_areas = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy];
    let face_dirs = [(1i64, 0i64, 0i64), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
    let mut area = 0.0;
    for &(i, j, k) in &occupied {
        for (f, &(dx, dy, dz)) in face_dirs.iter().enumerate() {
            if !occupied.contains(&(i + dx, j + dy, k + dz)) {
                area += face_areas[f];
            }
        }
    }

    let svr = area / volume;
    let pi = std::f64::consts::PI;
    let sphericity = pi.powf(1.0 / 3.0) * (6.0 * volume).powf(2.0 / 3.0) / area;
    let compactness1 = volume / (pi.sqrt() * area.powf(1.5));
    let compactness2 = 36.0 * pi * volume * volume / area.powi(3);
    let eq_radius = (3.0 * volume / (4.0 * pi)).powf(1.0 / 3.0);
    let spherical_disproportion = area / (4.0 * pi * eq_radius * eq_radius);

    let phys: Vec<(f64, f64, f64)> = roi
        .voxel_coords
        .iter()
        .map(|&(i, j, k)| (i as f64 * sx, j as f64 * sy, k as f64 * sz))
        .collect();
    let mut max3d = 0.0f64;
    for a in 0..phys.len() {
        for b in (a + 1)..phys.len() {
            let d = (phys[a].0 - phys[b].0).powi(2)
                + (phys[a].1 - phys[b].1).powi(2)
                + (phys[a].2 - phys[b].2).powi(2);
            max3d = max3d.max(d);
        }
    }
    let max3d = max3d.sqrt();

    // Population covariance of physical centers.
    let nf = n as f64;
    let cx = phys.iter().map(|p| p.0).sum::<f64>() / nf;
    let cy = phys.iter().map(|p| p.1).sum::<f64>() / nf;
    let cz = phys.iter().map(|p| p.2).sum::<f64>() / nf;
    let mut cov = [[0.0f64; 3]; 3];
    for p in &phys {
        let d = [p.0 - cx, p.1 - cy, p.2 - cz];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= nf;
        }
    }
    let m = Matrix3::from_fn(|r, c| cov[r][c]);
    let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().map(|&e| e.max(0.0)).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Numerical-noise floor: eigenvalues below 1e-10 of the leading one
    // are degenerate directions (collinear or coplanar voxel sets).
    let floor = eig[0] * 1e-10;
    for e in eig.iter_mut() {
        if *e < floor {
            *e = 0.0;
        }
    }
    let (l1, l2, l3) = (eig[0], eig[1], eig[2]);
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let least = 4.0 * l3.sqrt();
    let elongation = if l1 > 0.0 { (l2 / l1).sqrt() } else { 1.0 };
    let flatness = if l1 > 0.0 { (l3 / l1).sqrt() } else { 1.0 };

    let d2_slice = max_2d_diameter(&roi.voxel_coords, |c| c.2, |&(i, j, _)| (i as f64 * sx, j as f64 * sy));
    let d2_column = max_2d_diameter(&roi.voxel_coords, |c| c.1, |&(i, _, k)| (i as f64 * sx, k as f64 * sz));
    let d2_row = max_2d_diameter(&roi.voxel_coords, |c| c.0, |&(_, j, k)| (j as f64 * sy, k as f64 * sz));

    let mut map = FeatureMap::new();
    map.push("shape_voxel_volume", volume);
    map.push("shape_surface_area", area);
    map.push("shape_surface_volume_ratio", svr);
    map.push("shape_sphericity", sphericity);
    map.push("shape_compactness1", compactness1);
    map.push("shape_compactness2", compactness2);
    map.push("shape_spherical_disproportion", spherical_disproportion);
    map.push("shape_max_3d_diameter", max3d);
    map.push("shape_major_axis", major);
    map.push("shape_minor_axis", minor);
    map.push("shape_least_axis", least);
    map.push("shape_elongation", elongation);
    map.push("shape_flatness", flatness);
    map.push("shape_max_2d_diameter_slice", d2_slice);
    map.push("shape_max_2d_diameter_column", d2_column);
    map.push("shape_max_2d_diameter_row", d2_row);
    Ok(map)
}
