//! Longitudinal treatment-effect assessment: per-patient class-probability
//! trajectories and treated-vs-control cohort summaries.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::ModelBundle;
use crate::tabular::{Diagnosis, FeatureTable};

/// One patient's per-visit class-probability sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub patient_id: String,
    /// (visit month, per-class probabilities), strictly increasing months.
    pub points: Vec<(i32, Vec<f64>)>,
    /// Index of the monitored class in the probability vectors.
    pub target_class: usize,
}

impl Trajectory {
    pub fn new(patient_id: String, mut points: Vec<(i32, Vec<f64>)>, target_class: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoVisits(patient_id));
        }
        points.sort_by_key(|&(m, _)| m);
        for w in points.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidCohort(format!(
                    "duplicate visit month {} for {patient_id}",
                    w[1].0
                )));
            }
        }
        for (m, probs) in &points {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || target_class >= probs.len() {
                return Err(Error::InvalidCohort(format!(
                    "bad probability vector at month {m} for {patient_id} (sum {sum})"
                )));
            }
        }
        Ok(Trajectory { patient_id, points, target_class })
    }

    pub fn probability_at(&self, month: i32) -> Option<f64> {
        self.points.iter().find(|&&(m, _)| m == month).map(|(_, p)| p[self.target_class])
    }
}

/// Score one patient's visits with a per-visit model bundle.
///
/// `table` must hold the patient's per-visit fused rows; the model file
/// is expected to come from training that excluded this patient.
pub fn trajectory(bundle: &ModelBundle, table: &FeatureTable, patient_id: &str, target: Diagnosis) -> Result<Trajectory> {
    let target_class = bundle
        .classes
        .iter()
        .position(|&c| c == target)
        .ok_or_else(|| Error::InvalidModel(format!("model does not score class {target}")))?;
    let rows: Vec<usize> = (0..table.rows.len())
        .filter(|&i| table.rows[i].patient_id == patient_id)
        .collect();
    if rows.is_empty() {
        return Err(Error::NoVisits(patient_id.to_string()));
    }
    let sub = FeatureTable {
        columns: table.columns.clone(),
        rows: rows.iter().map(|&i| table.rows[i].clone()).collect(),
    };
    let probs = bundle.score_table(&sub)?;
    let mut points = Vec::with_capacity(rows.len());
    for (t, &i) in rows.iter().enumerate() {
        let month = table.rows[i]
            .visit_month
            .ok_or_else(|| Error::InvalidModel("trajectory scoring requires per-visit rows".into()))?;
        points.push((month, probs.row(t).to_vec()));
    }
    Trajectory::new(patient_id.to_string(), points, target_class)
}

/// Whether "average decrease" runs over decreasing patients only (the
/// default) or over the whole arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecreaseAverage {
    DecreasersOnly,
    AllPatients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: usize,
    pub n_decreased: usize,
    pub mean_decrease_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTreatmentReport {
    pub horizon_months: i32,
    pub average: DecreaseAverage,
    pub treated: ArmSummary,
    pub control: ArmSummary,
}

fn summarize(trajectories: &[Trajectory], horizon: i32, average: DecreaseAverage) -> Result<ArmSummary> {
    let mut decreases = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let p0 = t
            .probability_at(0)
            .ok_or_else(|| Error::MissingTimepoint { patient: t.patient_id.clone(), month: 0 })?;
        let ph = t
            .probability_at(horizon)
            .ok_or_else(|| Error::MissingTimepoint { patient: t.patient_id.clone(), month: horizon })?;
        decreases.push(p0 - ph);
    }
    // Strictly positive decrease counts; flat trajectories do not.
    let decreasers: Vec<f64> = decreases.iter().copied().filter(|&d| d > 0.0).collect();
    let mean = match average {
        DecreaseAverage::DecreasersOnly => {
            if decreasers.is_empty() {
                0.0
            } else {
                decreasers.iter().sum::<f64>() / decreasers.len() as f64
            }
        }
        DecreaseAverage::AllPatients => {
            if decreases.is_empty() {
                0.0
            } else {
                decreases.iter().sum::<f64>() / decreases.len() as f64
            }
        }
    };
    Ok(ArmSummary { n: trajectories.len(), n_decreased: decreasers.len(), mean_decrease_pct: 100.0 * mean })
}

/// Compare treated and control arms at one horizon.
pub fn cohort_report(
    treated: &[Trajectory],
    control: &[Trajectory],
    horizon: i32,
    average: DecreaseAverage,
) -> Result<CohortTreatmentReport> {
    Ok(CohortTreatmentReport {
        horizon_months: horizon,
        average,
        treated: summarize(treated, horizon, average)?,
        control: summarize(control, horizon, average)?,
    })
}

/// Per-patient (month, probability) pairs for plotting.
pub fn write_trajectory_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["patient_id", "visit_month", "target_probability"])?;
    for t in trajectories {
        for &(m, ref probs) in &t.points {
            w.write_record([
                t.patient_id.as_str(),
                &m.to_string(),
                &format!("{}", probs[t.target_class]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
