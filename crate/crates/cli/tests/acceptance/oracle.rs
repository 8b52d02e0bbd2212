//! Naive reference implementations of the radiomics catalog, kept
//! deliberately independent of the library: set-based adjacency tests,
//! union-find zones, textbook formula evaluation, and a closed-form 3x3
//! symmetric eigensolver. Matrices are compared exactly; features within
//! 1e-9 relative.

use std::collections::{BTreeMap, BTreeSet, HashMap};

/// A bare ROI: integer coordinates, raw intensities, physical spacing.
#[derive(Clone)]
pub struct NaiveRoi {
    pub coords: Vec<(i64, i64, i64)>,
    pub intensities: Vec<f64>,
    pub spacing: (f64, f64, f64),
}

pub struct NaiveDiscretized {
    pub roi: NaiveRoi,
    pub ng: usize,
    pub bins: Vec<u32>,
}

/// Equal-width binning over [min, max]; constant ROIs collapse to bin 1.
pub fn naive_discretize(roi: &NaiveRoi, ng: usize) -> NaiveDiscretized {
    let min = roi.intensities.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = roi.intensities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = roi
        .intensities
        .iter()
        .map(|&x| {
            if max == min {
                1
            } else {
                let w = (max - min) / ng as f64;
                (((x - min) / w).floor() as usize + 1).min(ng) as u32
            }
        })
        .collect();
    NaiveDiscretized { roi: roi.clone(), ng, bins }
}

fn chebyshev(a: (i64, i64, i64), b: (i64, i64, i64)) -> i64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs()).max((a.2 - b.2).abs())
}

/// The 13 canonical directions re-derived from first principles: all 26
/// unit offsets whose first nonzero component is positive.
fn canonical_directions() -> Vec<(i64, i64, i64)> {
    let mut out = Vec::new();
    for dx in -1..=1i64 {
        for dy in -1..=1i64 {
            for dz in -1..=1i64 {
                if (dx, dy, dz) == (0, 0, 0) {
                    continue;
                }
                let first = [dx, dy, dz].into_iter().find(|&c| c != 0).unwrap();
                if first > 0 {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    assert_eq!(out.len(), 13);
    out
}

// ---------------------------------------------------------------------------
// Matrices as sparse maps
// ---------------------------------------------------------------------------

/// GLCM by ordered-pair enumeration: every ordered voxel pair at offset
/// components in {-d, 0, d} contributes one count.
pub fn naive_glcm(d: &NaiveDiscretized, dist: i64) -> BTreeMap<(u32, u32), f64> {
    let mut counts = BTreeMap::new();
    let n = d.roi.coords.len();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let delta = (
                d.roi.coords[b].0 - d.roi.coords[a].0,
                d.roi.coords[b].1 - d.roi.coords[a].1,
                d.roi.coords[b].2 - d.roi.coords[a].2,
            );
            let ok = [delta.0, delta.1, delta.2].iter().all(|&c| c == 0 || c == dist || c == -dist)
                && delta != (0, 0, 0);
            if ok {
                *counts.entry((d.bins[a], d.bins[b])).or_insert(0.0) += 1.0;
            }
        }
    }
    counts
}

/// GLRLM by explicit line segmentation and run-length encoding.
pub fn naive_glrlm(d: &NaiveDiscretized) -> BTreeMap<(u32, usize), f64> {
    let set: HashMap<(i64, i64, i64), u32> =
        d.roi.coords.iter().copied().zip(d.bins.iter().copied()).collect();
    let mut counts = BTreeMap::new();
    for dir in canonical_directions() {
        for (&start, _) in set.iter() {
            // Segment starts where the predecessor leaves the ROI.
            let pred = (start.0 - dir.0, start.1 - dir.1, start.2 - dir.2);
            if set.contains_key(&pred) {
                continue;
            }
            // Walk the contiguous segment, run-length encoding the bins.
            let mut cur = start;
            let mut run_bin = set[&cur];
            let mut run_len = 0usize;
            loop {
                match set.get(&cur) {
                    Some(&b) if b == run_bin => run_len += 1,
                    Some(&b) => {
                        *counts.entry((run_bin, run_len)).or_insert(0.0) += 1.0;
                        run_bin = b;
                        run_len = 1;
                    }
                    None => break,
                }
                cur = (cur.0 + dir.0, cur.1 + dir.1, cur.2 + dir.2);
            }
            *counts.entry((run_bin, run_len)).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// GLSZM via union-find over equal-bin 26-adjacent pairs.
pub fn naive_glszm(d: &NaiveDiscretized) -> BTreeMap<(u32, usize), f64> {
    let n = d.roi.coords.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if d.bins[a] == d.bins[b] && chebyshev(d.roi.coords[a], d.roi.coords[b]) == 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        *sizes.entry(root).or_insert(0) += 1;
    }
    let mut counts = BTreeMap::new();
    for (root, size) in sizes {
        *counts.entry((d.bins[root], size)).or_insert(0.0) += 1.0;
    }
    counts
}

/// GLDM by all-pairs dependence counting; column index is d + 1.
pub fn naive_gldm(d: &NaiveDiscretized, alpha: f64) -> BTreeMap<(u32, usize), f64> {
    let n = d.roi.coords.len();
    let mut counts = BTreeMap::new();
    for a in 0..n {
        let mut dep = 0usize;
        for b in 0..n {
            if a != b
                && chebyshev(d.roi.coords[a], d.roi.coords[b]) == 1
                && (d.bins[a] as f64 - d.bins[b] as f64).abs() <= alpha
            {
                dep += 1;
            }
        }
        *counts.entry((d.bins[a], dep + 1)).or_insert(0.0) += 1.0;
    }
    counts
}

/// NGTDM per-level vectors (n_i, s_i), accumulated in ROI order.
pub fn naive_ngtdm(d: &NaiveDiscretized) -> BTreeMap<u32, (f64, f64)> {
    let n = d.roi.coords.len();
    let mut vectors: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for a in 0..n {
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for b in 0..n {
            if a != b && chebyshev(d.roi.coords[a], d.roi.coords[b]) == 1 {
                sum += d.bins[b] as f64;
                cnt += 1;
            }
        }
        if cnt == 0 {
            continue;
        }
        let entry = vectors.entry(d.bins[a]).or_insert((0.0, 0.0));
        entry.0 += 1.0;
        entry.1 += (d.bins[a] as f64 - sum / cnt as f64).abs();
    }
    vectors
}

// ---------------------------------------------------------------------------
// Feature evaluation from the naive matrices
// ---------------------------------------------------------------------------

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

pub fn naive_glcm_features(counts: &BTreeMap<(u32, u32), f64>, ng: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let total: f64 = counts.values().sum();
    let mut feat = |name: &str, v: f64| {
        out.insert(name.to_string(), v);
    };
    if total == 0.0 {
        for name in [
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
        ] {
            out.insert(name.to_string(), 0.0);
        }
        return out;
    }
    let p = |i: u32, j: u32| counts.get(&(i, j)).copied().unwrap_or(0.0) / total;
    let levels: Vec<u32> = (1..=ng as u32).collect();
    let px: Vec<f64> = levels.iter().map(|&i| levels.iter().map(|&j| p(i, j)).sum()).collect();
    let py: Vec<f64> = levels.iter().map(|&j| levels.iter().map(|&i| p(i, j)).sum()).collect();
    let mu_x: f64 = levels.iter().map(|&i| i as f64 * px[(i - 1) as usize]).sum();
    let mu_y: f64 = levels.iter().map(|&j| j as f64 * py[(j - 1) as usize]).sum();
    let var_x: f64 = levels.iter().map(|&i| (i as f64 - mu_x).powi(2) * px[(i - 1) as usize]).sum();
    let var_y: f64 = levels.iter().map(|&j| (j as f64 - mu_y).powi(2) * py[(j - 1) as usize]).sum();

    let mut autocorr = 0.0;
    let mut prominence = 0.0;
    let mut shade = 0.0;
    let mut tendency = 0.0;
    let mut contrast = 0.0;
    let mut energy = 0.0;
    let mut entropy = 0.0;
    let mut idm = 0.0;
    let mut idmn = 0.0;
    let mut id = 0.0;
    let mut idn = 0.0;
    let mut invvar = 0.0;
    let mut maxprob = 0.0f64;
    let mut sumsq = 0.0;
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for &i in &levels {
        for &j in &levels {
            let v = p(i, j);
            let (fi, fj) = (i as f64, j as f64);
            autocorr += fi * fj * v;
            prominence += (fi + fj - mu_x - mu_y).powi(4) * v;
            shade += (fi + fj - mu_x - mu_y).powi(3) * v;
            tendency += (fi + fj - mu_x - mu_y).powi(2) * v;
            contrast += (fi - fj).powi(2) * v;
            energy += v * v;
            entropy -= xlog2(v);
            let diff = (fi - fj).abs();
            idm += v / (1.0 + diff * diff);
            idmn += v / (1.0 + diff * diff / (ng * ng) as f64);
            id += v / (1.0 + diff);
            idn += v / (1.0 + diff / ng as f64);
            if i != j {
                invvar += v / (diff * diff);
            }
            maxprob = maxprob.max(v);
            sumsq += (fi - mu_x).powi(2) * v;
            let (pxi, pyj) = (px[(i - 1) as usize], py[(j - 1) as usize]);
            if v > 0.0 && pxi > 0.0 && pyj > 0.0 {
                hxy1 -= v * (pxi * pyj).log2();
            }
            hxy2 -= xlog2(pxi * pyj);
        }
    }
    // Sum and difference distributions.
    let mut p_sum: BTreeMap<u32, f64> = BTreeMap::new();
    let mut p_diff: BTreeMap<u32, f64> = BTreeMap::new();
    for &i in &levels {
        for &j in &levels {
            *p_sum.entry(i + j).or_insert(0.0) += p(i, j);
            *p_diff.entry(i.abs_diff(j)).or_insert(0.0) += p(i, j);
        }
    }
    let diff_avg: f64 = p_diff.iter().map(|(&k, &v)| k as f64 * v).sum();
    let diff_ent: f64 = -p_diff.values().map(|&v| xlog2(v)).sum::<f64>();
    let diff_var: f64 = p_diff.iter().map(|(&k, &v)| (k as f64 - diff_avg).powi(2) * v).sum();
    let sum_avg: f64 = p_sum.iter().map(|(&k, &v)| k as f64 * v).sum();
    let sum_ent: f64 = -p_sum.values().map(|&v| xlog2(v)).sum::<f64>();

    let hx = -px.iter().map(|&v| xlog2(v)).sum::<f64>();
    let hy = -py.iter().map(|&v| xlog2(v)).sum::<f64>();
    let correlation = if var_x > 1e-12 && var_y > 1e-12 {
        (autocorr - mu_x * mu_y) / (var_x.sqrt() * var_y.sqrt())
    } else {
        0.0
    };
    let imc1 = if hx.max(hy) > 0.0 { (entropy - hxy1) / hx.max(hy) } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - entropy)).exp()).max(0.0).sqrt();

    feat("glcm_autocorrelation", autocorr);
    feat("glcm_joint_average", mu_x);
    feat("glcm_cluster_prominence", prominence);
    feat("glcm_cluster_shade", shade);
    feat("glcm_cluster_tendency", tendency);
    feat("glcm_contrast", contrast);
    feat("glcm_correlation", correlation);
    feat("glcm_difference_average", diff_avg);
    feat("glcm_difference_entropy", diff_ent);
    feat("glcm_difference_variance", diff_var);
    feat("glcm_joint_energy", energy);
    feat("glcm_joint_entropy", entropy);
    feat("glcm_imc1", imc1);
    feat("glcm_imc2", imc2);
    feat("glcm_idm", idm);
    feat("glcm_idmn", idmn);
    feat("glcm_id", id);
    feat("glcm_idn", idn);
    feat("glcm_inverse_variance", invvar);
    feat("glcm_maximum_probability", maxprob);
    feat("glcm_sum_average", sum_avg);
    feat("glcm_sum_entropy", sum_ent);
    feat("glcm_sum_squares", sumsq);
    out
}

/// Shared evaluation for the run/zone/dependence families, parameterized
/// by prefix and the family-specific normalizers.
#[allow(clippy::too_many_arguments)]
fn emphasis_family(
    counts: &BTreeMap<(u32, usize), f64>,
    prefix: &str,
    short_name: &str,
    long_name: &str,
    count_name: &str,
    count_nn_name: Option<&str>,
    ratio_name: &str,
    ratio_denominator: f64,
    var_i_name: &str,
    var_j_name: &str,
    entropy_name: &str,
    low: &str,
    high: &str,
    short_low: &str,
    short_high: &str,
    long_low: &str,
    long_high: &str,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let total: f64 = counts.values().sum();
    let mut rows: BTreeMap<u32, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(i, j), &c) in counts {
        *rows.entry(i).or_insert(0.0) += c;
        *cols.entry(j).or_insert(0.0) += c;
    }
    let w = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        counts.iter().map(|(&(i, j), &c)| c * f(i as f64, j as f64)).sum::<f64>() / total
    };
    out.insert(format!("{prefix}_{short_name}"), w(&|_, j| 1.0 / (j * j)));
    out.insert(format!("{prefix}_{long_name}"), w(&|_, j| j * j));
    out.insert(format!("{prefix}_gln"), rows.values().map(|&r| r * r).sum::<f64>() / total);
    out.insert(
        format!("{prefix}_glnn"),
        rows.values().map(|&r| r * r).sum::<f64>() / (total * total),
    );
    out.insert(format!("{prefix}_{count_name}"), cols.values().map(|&c| c * c).sum::<f64>() / total);
    if let Some(nn) = count_nn_name {
        out.insert(format!("{prefix}_{nn}"), cols.values().map(|&c| c * c).sum::<f64>() / (total * total));
    }
    out.insert(format!("{prefix}_{ratio_name}"), total / ratio_denominator);
    let mu_i = w(&|i, _| i);
    let mu_j = w(&|_, j| j);
    out.insert(format!("{prefix}_{var_i_name}"), w(&|i, _| (i - mu_i) * (i - mu_i)));
    out.insert(format!("{prefix}_{var_j_name}"), w(&|_, j| (j - mu_j) * (j - mu_j)));
    let entropy = -counts.values().map(|&c| xlog2(c / total)).sum::<f64>();
    out.insert(format!("{prefix}_{entropy_name}"), entropy);
    out.insert(format!("{prefix}_{low}"), w(&|i, _| 1.0 / (i * i)));
    out.insert(format!("{prefix}_{high}"), w(&|i, _| i * i));
    out.insert(format!("{prefix}_{short_low}"), w(&|i, j| 1.0 / (i * i * j * j)));
    out.insert(format!("{prefix}_{short_high}"), w(&|i, j| i * i / (j * j)));
    out.insert(format!("{prefix}_{long_low}"), w(&|i, j| j * j / (i * i)));
    out.insert(format!("{prefix}_{long_high}"), w(&|i, j| i * i * j * j));
    out
}

pub fn naive_glrlm_features(counts: &BTreeMap<(u32, usize), f64>, np: usize) -> BTreeMap<String, f64> {
    emphasis_family(
        counts,
        "glrlm",
        "sre",
        "lre",
        "rln",
        Some("rlnn"),
        "rp",
        np as f64 * 13.0,
        "glv",
        "rv",
        "re",
        "lglre",
        "hglre",
        "srlgle",
        "srhgle",
        "lrlgle",
        "lrhgle",
    )
}

pub fn naive_glszm_features(counts: &BTreeMap<(u32, usize), f64>, np: usize) -> BTreeMap<String, f64> {
    emphasis_family(
        counts,
        "glszm",
        "sae",
        "lae",
        "szn",
        Some("sznn"),
        "zp",
        np as f64,
        "glv",
        "zv",
        "ze",
        "lglze",
        "hglze",
        "salgle",
        "sahgle",
        "lalgle",
        "lahgle",
    )
}

pub fn naive_gldm_features(counts: &BTreeMap<(u32, usize), f64>) -> BTreeMap<String, f64> {
    let total: f64 = counts.values().sum();
    let mut out = emphasis_family(
        counts,
        "gldm",
        "sde",
        "lde",
        "dn",
        Some("dnn"),
        "__unused_ratio",
        total,
        "glv",
        "dv",
        "de",
        "lgle",
        "hgle",
        "sdlgle",
        "sdhgle",
        "ldlgle",
        "ldhgle",
    );
    // The dependence family has no normalized gray-level count and no
    // ratio feature.
    out.remove("gldm___unused_ratio");
    out.remove("gldm_glnn");
    out
}

pub fn naive_ngtdm_features(vectors: &BTreeMap<u32, (f64, f64)>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let n: f64 = vectors.values().map(|&(ni, _)| ni).sum();
    let cap = 1e6;
    if n == 0.0 {
        out.insert("ngtdm_coarseness".into(), cap);
        out.insert("ngtdm_contrast".into(), 0.0);
        out.insert("ngtdm_busyness".into(), 0.0);
        out.insert("ngtdm_complexity".into(), 0.0);
        out.insert("ngtdm_strength".into(), 0.0);
        return out;
    }
    let levels: Vec<u32> = vectors.keys().copied().collect();
    let p = |i: u32| vectors[&i].0 / n;
    let s = |i: u32| vectors[&i].1;
    let ngp = levels.len() as f64;
    let s_total: f64 = levels.iter().map(|&i| s(i)).sum();
    let ps: f64 = levels.iter().map(|&i| p(i) * s(i)).sum();

    let coarseness = if ps > 0.0 { (1.0 / ps).min(cap) } else { cap };
    let mut contrast = 0.0;
    let mut busy_den = 0.0;
    let mut complexity = 0.0;
    let mut strength_num = 0.0;
    for &i in &levels {
        for &j in &levels {
            let (fi, fj) = (i as f64, j as f64);
            contrast += p(i) * p(j) * (fi - fj).powi(2);
            busy_den += (fi * p(i) - fj * p(j)).abs();
            complexity += (fi - fj).abs() * (p(i) * s(i) + p(j) * s(j)) / (p(i) + p(j));
            strength_num += (p(i) + p(j)) * (fi - fj).powi(2);
        }
    }
    out.insert(
        "ngtdm_contrast".into(),
        if ngp > 1.0 { contrast / (ngp * (ngp - 1.0)) * (s_total / n) } else { 0.0 },
    );
    out.insert("ngtdm_coarseness".into(), coarseness);
    out.insert("ngtdm_busyness".into(), if busy_den > 0.0 { ps / busy_den } else { 0.0 });
    out.insert("ngtdm_complexity".into(), complexity / n);
    out.insert("ngtdm_strength".into(), if s_total > 0.0 { strength_num / s_total } else { 0.0 });
    out
}

// ---------------------------------------------------------------------------
// First-order and shape
// ---------------------------------------------------------------------------

fn naive_percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn naive_first_order(roi: &NaiveRoi, ng: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let x = &roi.intensities;
    let n = x.len() as f64;
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let p10 = naive_percentile(&sorted, 10.0);
    let p90 = naive_percentile(&sorted, 90.0);
    let subset: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let rmad = if subset.is_empty() {
        0.0
    } else {
        let sm = subset.iter().sum::<f64>() / subset.len() as f64;
        subset.iter().map(|v| (v - sm).abs()).sum::<f64>() / subset.len() as f64
    };
    let d = naive_discretize(roi, ng);
    let mut hist: BTreeMap<u32, f64> = BTreeMap::new();
    for &b in &d.bins {
        *hist.entry(b).or_insert(0.0) += 1.0;
    }
    let entropy: f64 = -hist.values().map(|&c| xlog2(c / n)).sum::<f64>();
    let uniformity: f64 = hist.values().map(|&c| (c / n) * (c / n)).sum();

    out.insert("fo_mean".into(), mean);
    out.insert("fo_median".into(), naive_percentile(&sorted, 50.0));
    out.insert("fo_minimum".into(), sorted[0]);
    out.insert("fo_maximum".into(), sorted[sorted.len() - 1]);
    out.insert("fo_range".into(), sorted[sorted.len() - 1] - sorted[0]);
    out.insert("fo_variance".into(), m2);
    out.insert("fo_std_dev".into(), m2.sqrt());
    out.insert("fo_skewness".into(), if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 });
    out.insert("fo_kurtosis".into(), if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 });
    out.insert("fo_energy".into(), energy);
    out.insert("fo_total_energy".into(), energy * roi.spacing.0 * roi.spacing.1 * roi.spacing.2);
    out.insert("fo_entropy".into(), entropy);
    out.insert("fo_uniformity".into(), uniformity);
    out.insert("fo_p10".into(), p10);
    out.insert("fo_p90".into(), p90);
    out.insert("fo_iqr".into(), naive_percentile(&sorted, 75.0) - naive_percentile(&sorted, 25.0));
    out.insert("fo_mad".into(), x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n);
    out.insert("fo_rmad".into(), rmad);
    out.insert("fo_rms".into(), (energy / n).sqrt());
    out
}

/// Closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric
/// method), descending. Accurate only for well-separated spectra, so the
/// shape oracle handles degenerate ranks exactly before calling this.
fn symmetric_eigenvalues_3x3(a: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let mut eig;
    if p1 == 0.0 {
        eig = [a[0][0], a[1][1], a[2][2]];
    } else {
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = a;
        for (r, row) in b.iter_mut().enumerate() {
            row[r] -= q;
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        eig = [e1, 3.0 * q - e1 - e3, e3];
    }
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Exact affine rank of an integer point set via integer cross and
/// triple products; unaffected by the positive diagonal spacing scale.
fn exact_point_rank(coords: &[(i64, i64, i64)]) -> usize {
    let o = coords[0];
    let diffs: Vec<(i64, i64, i64)> =
        coords.iter().map(|&(x, y, z)| (x - o.0, y - o.1, z - o.2)).collect();
    let d1 = match diffs.iter().find(|&&d| d != (0, 0, 0)) {
        Some(&d) => d,
        None => return 0,
    };
    let cross = |a: (i64, i64, i64), b: (i64, i64, i64)| {
        (a.1 * b.2 - a.2 * b.1, a.2 * b.0 - a.0 * b.2, a.0 * b.1 - a.1 * b.0)
    };
    let d2 = match diffs.iter().find(|&&d| cross(d1, d) != (0, 0, 0)) {
        Some(&d) => d,
        None => return 1,
    };
    let n = cross(d1, d2);
    for &d in &diffs {
        if n.0 * d.0 + n.1 * d.1 + n.2 * d.2 != 0 {
            return 3;
        }
    }
    2
}

/// Covariance eigenvalues with exact handling of degenerate point sets:
/// rank 1 gives (trace, 0, 0); rank 2 solves the 2x2 characteristic
/// quadratic with the third eigenvalue pinned to zero.
fn covariance_eigenvalues(coords: &[(i64, i64, i64)], cov: [[f64; 3]; 3]) -> [f64; 3] {
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    match exact_point_rank(coords) {
        0 => [0.0, 0.0, 0.0],
        1 => [trace, 0.0, 0.0],
        2 => {
            let minors = (cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0])
                + (cov[0][0] * cov[2][2] - cov[0][2] * cov[2][0])
                + (cov[1][1] * cov[2][2] - cov[1][2] * cov[2][1]);
            let disc = (trace * trace - 4.0 * minors).max(0.0).sqrt();
            [(trace + disc) / 2.0, (trace - disc) / 2.0, 0.0]
        }
        _ => symmetric_eigenvalues_3x3(cov),
    }
}

pub fn naive_shape(roi: &NaiveRoi) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let (sx, sy, sz) = roi.spacing;
    let n = roi.coords.len() as f64;
    let set: BTreeSet<(i64, i64, i64)> = roi.coords.iter().copied().collect();
    let volume = n * sx * sy * sz;
    let mut area = 0.0;
    for &(i, j, k) in &set {
        for (d, face) in [
            ((1i64, 0i64, 0i64), sy * sz),
            ((-1, 0, 0), sy * sz),
            ((0, 1, 0), sx * sz),
            ((0, -1, 0), sx * sz),
            ((0, 0, 1), sx * sy),
            ((0, 0, -1), sx * sy),
        ] {
            if !set.contains(&(i + d.0, j + d.1, k + d.2)) {
                area += face;
            }
        }
    }
    let pi = std::f64::consts::PI;
    out.insert("shape_voxel_volume".into(), volume);
    out.insert("shape_surface_area".into(), area);
    out.insert("shape_surface_volume_ratio".into(), area / volume);
    out.insert("shape_sphericity".into(), pi.powf(1.0 / 3.0) * (6.0 * volume).powf(2.0 / 3.0) / area);
    out.insert("shape_compactness1".into(), volume / (pi.sqrt() * area.powf(1.5)));
    out.insert("shape_compactness2".into(), 36.0 * pi * volume * volume / (area * area * area));
    let radius = (3.0 * volume / (4.0 * pi)).powf(1.0 / 3.0);
    out.insert("shape_spherical_disproportion".into(), area / (4.0 * pi * radius * radius));

    let phys: Vec<(f64, f64, f64)> =
        roi.coords.iter().map(|&(i, j, k)| (i as f64 * sx, j as f64 * sy, k as f64 * sz)).collect();
    let dist = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt()
    };
    let mut max3d = 0.0f64;
    for a in 0..phys.len() {
        for b in 0..phys.len() {
            max3d = max3d.max(dist(phys[a], phys[b]));
        }
    }
    out.insert("shape_max_3d_diameter".into(), max3d);

    let mean = phys.iter().fold((0.0, 0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let mean = (mean.0 / n, mean.1 / n, mean.2 / n);
    let mut cov = [[0.0f64; 3]; 3];
    for p in &phys {
        let d = [p.0 - mean.0, p.1 - mean.1, p.2 - mean.2];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += d[r] * d[c] / n;
            }
        }
    }
    let eig = covariance_eigenvalues(&roi.coords, cov).map(|e| e.max(0.0));
    out.insert("shape_major_axis".into(), 4.0 * eig[0].sqrt());
    out.insert("shape_minor_axis".into(), 4.0 * eig[1].sqrt());
    out.insert("shape_least_axis".into(), 4.0 * eig[2].sqrt());
    out.insert("shape_elongation".into(), if eig[0] > 0.0 { (eig[1] / eig[0]).sqrt() } else { 1.0 });
    out.insert("shape_flatness".into(), if eig[0] > 0.0 { (eig[2] / eig[0]).sqrt() } else { 1.0 });

    let max2d = |axis: usize| -> f64 {
        let mut best = 0.0f64;
        for a in 0..roi.coords.len() {
            for b in 0..roi.coords.len() {
                let (ca, cb) = (roi.coords[a], roi.coords[b]);
                let fixed = match axis {
                    2 => ca.2 == cb.2,
                    1 => ca.1 == cb.1,
                    _ => ca.0 == cb.0,
                };
                if fixed {
                    let (pa, pb) = (phys[a], phys[b]);
                    let d2 = match axis {
                        2 => (pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2),
                        1 => (pa.0 - pb.0).powi(2) + (pa.2 - pb.2).powi(2),
                        _ => (pa.1 - pb.1).powi(2) + (pa.2 - pb.2).powi(2),
                    };
                    best = best.max(d2.sqrt());
                }
            }
        }
        best
    };
    out.insert("shape_max_2d_diameter_slice".into(), max2d(2));
    out.insert("shape_max_2d_diameter_column".into(), max2d(1));
    out.insert("shape_max_2d_diameter_row".into(), max2d(0));
    out
}
