//! First-order intensity statistics.

use crate::error::{Error, Result};
use crate::volume::RegionOfInterest;

use super::FeatureMap;

pub(crate) const FEATURE_NAMES: [&str; 19] = [
    "fo_mean",
    "fo_median",
    "fo_minimum",
    "fo_maximum",
    "fo_range",
    "fo_variance",
    "fo_std_dev",
    "fo_skewness",
    "fo_kurtosis",
    "fo_energy",
    "fo_total_energy",
    "fo_entropy",
    "fo_uniformity",
    "fo_p10",
    "fo_p90",
    "fo_iqr",
    "fo_mad",
    "fo_rmad",
    "fo_rms",
];

/// Percentile by linear interpolation between order statistics
/// (rank = q/100 * (n-1)); `sorted` must be ascending and non-empty.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// The first-order set over raw intensities; entropy and uniformity are
/// computed over the `bin_count`-level discretized histogram.
///
/// Degenerate (constant) ROIs return 0 for variance, skewness, kurtosis,
/// and entropy, and 1 for uniformity.
pub fn first_order_features(roi: &RegionOfInterest, bin_count: usize) -> Result<FeatureMap> {
    if roi.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let x = &roi.intensities;
    let n = x.len() as f64;
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mean = x.iter().sum::<f64>() / n;
    let minimum = sorted[0];
    let maximum = sorted[sorted.len() - 1];
    let range = maximum - minimum;

    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let variance = m2;
    let std_dev = m2.sqrt();
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };

    let energy = x.iter().map(|v| v * v).sum::<f64>();
    let voxel_volume = roi.spacing.0 * roi.spacing.1 * roi.spacing.2;
    let total_energy = energy * voxel_volume;
    let rms = (energy / n).sqrt();

    let median = percentile(&sorted, 50.0);
    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let iqr = percentile(&sorted, 75.0) - percentile(&sorted, 25.0);

    let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let subset: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let rmad = if subset.is_empty() {
        0.0
    } else {
        let sm = subset.iter().sum::<f64>() / subset.len() as f64;
        subset.iter().map(|v| (v - sm).abs()).sum::<f64>() / subset.len() as f64
    };

    // Histogram over the discretized gray levels.
    let d = super::discretize(roi, bin_count)?;
    let mut hist = vec![0usize; bin_count];
    for &b in &d.bin_index {
        hist[(b - 1) as usize] += 1;
    }
    let mut entropy: f64 = 0.0;
    let mut uniformity = 0.0;
    for &c in &hist {
        if c > 0 {
            let p = c as f64 / n;
            entropy -= p * p.log2();
            uniformity += p * p;
        }
    }
    let mut map = FeatureMap::new();
    map.push("fo_mean", mean);
    map.push("fo_median", median);
    map.push("fo_minimum", minimum);
    map.push("fo_maximum", maximum);
    map.push("fo_range", range);
    map.push("fo_variance", variance);
    map.push("fo_std_dev", std_dev);
    map.push("fo_skewness", skewness);
    map.push("fo_kurtosis", kurtosis);
    map.push("fo_energy", energy);
    map.push("fo_total_energy", total_energy);
    map.push("fo_entropy", entropy);
    map.push("fo_uniformity", uniformity);
    map.push("fo_p10", p10);
    map.push("fo_p90", p90);
    map.push("fo_iqr", iqr);
    map.push("fo_mad", mad);
    map.push("fo_rmad", rmad);
    map.push("fo_rms", rms);
    Ok(map)
}
