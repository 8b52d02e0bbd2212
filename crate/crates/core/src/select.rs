//! Multicollinearity reduction and feature ranking.
//!
//! Correlated-pair elimination: every pair with |Pearson| above the
//! threshold loses its lower-MI member, iterated until no pair exceeds
//! the threshold; survivors are ranked by mutual information with the
//! target. MI is a plug-in estimate over equal-frequency bins
//! (continuous) or raw codes (categorical).

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::ColumnKind;

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.70;
pub const DEFAULT_MI_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: String,
    pub reason: String,
    pub rival: String,
}

/// Audit record of one selection run; serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Survivors ordered by descending MI (ties by name).
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    /// Per-feature MI against the target, input order.
    pub scores: Vec<(String, f64)>,
}

/// Pearson correlation; 0 when either column is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    assert!(a.len() >= 2, "correlation needs at least 2 samples");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Equal-frequency bin assignment. Ties share the bin of their value, so
/// the binning is a function of the value alone.
fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Upper edge of each bin at the ceil(n*(t+1)/bins)-th order statistic.
    let mut edges = Vec::with_capacity(bins);
    for t in 0..bins {
        let idx = ((n * (t + 1)).div_ceil(bins)).min(n) - 1;
        edges.push(sorted[idx]);
    }
    x.iter()
        .map(|&v| edges.iter().position(|&e| v <= e).unwrap_or(bins - 1))
        .collect()
}

/// Plug-in mutual information (nats) between a column and class labels.
///
/// Continuous columns are equal-frequency binned; categorical columns use
/// their raw codes. A constant column is degenerate and scores 0.
pub fn mutual_information(x: &[f64], y: &[usize], kind: ColumnKind, bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    assert!(!x.is_empty(), "mutual information needs samples");
    let n = x.len();
    let classes = y.iter().copied().max().unwrap_or(0) + 1;
    let xb: Vec<usize> = match kind {
        ColumnKind::Continuous => equal_frequency_bins(x, bins.max(1)),
        ColumnKind::Categorical => {
            // Raw codes, remapped to dense indices.
            let mut codes: Vec<i64> = x.iter().map(|&v| v.round() as i64).collect();
            let mut distinct = codes.clone();
            distinct.sort_unstable();
            distinct.dedup();
            codes.iter_mut().for_each(|c| *c = distinct.binary_search(c).unwrap() as i64);
            codes.into_iter().map(|c| c as usize).collect()
        }
    };
    let nb = xb.iter().copied().max().unwrap_or(0) + 1;
    let mut joint = vec![0.0f64; nb * classes];
    let mut px = vec![0.0f64; nb];
    let mut py = vec![0.0f64; classes];
    let w = 1.0 / n as f64;
    for (&b, &c) in xb.iter().zip(y) {
        joint[b * classes + c] += w;
        px[b] += w;
        py[c] += w;
    }
    let mut mi = 0.0;
    for b in 0..nb {
        for c in 0..classes {
            let j = joint[b * classes + c];
            if j > 0.0 {
                mi += j * (j / (px[b] * py[c])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Correlated-pair elimination with MI ranking.
///
/// Fit on training rows only; the output is deterministic (ties break
/// lexicographically).
pub fn sulov_select(
    matrix: ArrayView2<'_, f64>,
    names: &[String],
    kinds: &[ColumnKind],
    labels: &[usize],
    corr_threshold: f64,
    mi_bins: usize,
) -> Result<SelectionResult> {
    let ncols = matrix.ncols();
    assert_eq!(names.len(), ncols);
    assert_eq!(kinds.len(), ncols);
    assert!(ncols >= 1, "selection needs at least one feature");

    let cols: Vec<Vec<f64>> = (0..ncols).map(|c| matrix.column(c).to_vec()).collect();
    let mi: Vec<f64> = (0..ncols)
        .map(|c| mutual_information(&cols[c], labels, kinds[c], mi_bins))
        .collect::<Result<_>>()?;

    // Pairwise |Pearson| above threshold, computed once.
    let mut hot_pairs: Vec<(usize, usize, f64)> = Vec::new();
    for a in 0..ncols {
        for b in (a + 1)..ncols {
            let r = correlation(&cols[a], &cols[b])?.abs();
            if r > corr_threshold {
                hot_pairs.push((a, b, r));
            }
        }
    }

    let mut alive = vec![true; ncols];
    let mut dropped: Vec<DroppedFeature> = Vec::new();
    loop {
        let mut to_drop: Vec<(usize, usize, f64)> = Vec::new();
        for &(a, b, r) in &hot_pairs {
            if !alive[a] || !alive[b] {
                continue;
            }
            // The lower-MI member goes; ties drop the lexicographically
            // larger name.
            let victim_is_a = match mi[a].partial_cmp(&mi[b]).unwrap() {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => names[a] > names[b],
            };
            let (victim, rival) = if victim_is_a { (a, b) } else { (b, a) };
            to_drop.push((victim, rival, r));
        }
        if to_drop.is_empty() {
            break;
        }
        let mut seen_victims: Vec<usize> = Vec::new();
        for &(victim, rival, r) in &to_drop {
            alive[victim] = false;
            if !seen_victims.contains(&victim) {
                seen_victims.push(victim);
                dropped.push(DroppedFeature {
                    feature: names[victim].clone(),
                    reason: format!("|corr| {r:.4} > {corr_threshold} with lower MI"),
                    rival: names[rival].clone(),
                });
            }
        }
    }

    let mut kept_idx: Vec<usize> = (0..ncols).filter(|&c| alive[c]).collect();
    kept_idx.sort_by(|&a, &b| {
        mi[b].partial_cmp(&mi[a]).unwrap().then_with(|| names[a].cmp(&names[b]))
    });
    Ok(SelectionResult {
        kept: kept_idx.into_iter().map(|c| names[c].clone()).collect(),
        dropped,
        scores: names.iter().cloned().zip(mi).collect(),
    })
}

/// First `min(k, kept)` survivors.
pub fn truncate_top_k(result: &SelectionResult, k: usize) -> Vec<String> {
    assert!(k >= 1, "k must be at least 1");
    result.kept.iter().take(k).cloned().collect()
}
