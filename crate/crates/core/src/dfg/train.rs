//! Seeded, deterministic training: Adam over shuffled mini-batches with
//! a group-aware validation split and early stopping.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};

use super::{forward_pass, gradients, DfgConfig, DfgGradients, DfgModel};

const SALT_INIT: u64 = 0x494e4954; // "INIT"
const SALT_SPLIT: u64 = 0x53504c54; // "SPLT"
const SALT_EPOCH: u64 = 0x45504f43; // "EPOC"

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Per-epoch (train loss, validation loss), 1-indexed epochs.
    pub epochs: Vec<(f64, f64)>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

struct Adam {
    m: DfgGradients,
    v: DfgGradients,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &DfgModel) -> Self {
        let zeros = || DfgGradients {
            conv_w: vec![0.0; model.conv_w.len()],
            conv_b: vec![0.0; model.conv_b.len()],
            dense_w: model.dense.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            dense_b: model.dense.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        };
        Adam { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, model: &mut DfgModel, g: &DfgGradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let apply = |theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
            for t in 0..theta.len() {
                m[t] = BETA1 * m[t] + (1.0 - BETA1) * grad[t];
                v[t] = BETA2 * v[t] + (1.0 - BETA2) * grad[t] * grad[t];
                let mh = m[t] / bc1;
                let vh = v[t] / bc2;
                theta[t] -= lr * mh / (vh.sqrt() + EPS);
            }
        };
        apply(&mut model.conv_w, &g.conv_w, &mut self.m.conv_w, &mut self.v.conv_w);
        apply(&mut model.conv_b, &g.conv_b, &mut self.m.conv_b, &mut self.v.conv_b);
        for li in 0..model.dense.len() {
            apply(&mut model.dense[li].w, &g.dense_w[li], &mut self.m.dense_w[li], &mut self.v.dense_w[li]);
            apply(&mut model.dense[li].b, &g.dense_b[li], &mut self.m.dense_b[li], &mut self.v.dense_b[li]);
        }
    }
}

/// Early-stopping bookkeeping: stop once validation loss has failed to
/// improve for `patience` consecutive epochs.
struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, bad_epochs: 0 }
    }

    /// Returns (improved, stop).
    fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            (true, false)
        } else {
            self.bad_epochs += 1;
            (false, self.bad_epochs >= self.patience)
        }
    }
}

fn mean_loss(model: &DfgModel, matrix: ArrayView2<'_, f64>, labels: &[usize], rows: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &r in rows {
        let pass = forward_pass(model, matrix.row(r))?;
        total += super::loss(&pass.probabilities, labels[r]);
    }
    Ok(total / rows.len() as f64)
}

/// 20% of distinct groups (at least one, at most all but one) become the
/// validation set; the split is seeded and group-aware so no patient
/// straddles the boundary. A single-group input degenerates to
/// validation == training rows.
fn validation_split(groups: &[String], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut distinct: Vec<&String> = Vec::new();
    for g in groups {
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    distinct.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SALT_SPLIT));
    distinct.shuffle(&mut rng);
    if distinct.len() < 2 {
        let all: Vec<usize> = (0..groups.len()).collect();
        return (all.clone(), all);
    }
    let n_val = ((distinct.len() as f64 * 0.2).round() as usize).clamp(1, distinct.len() - 1);
    let val_groups: std::collections::BTreeSet<&String> = distinct[..n_val].iter().copied().collect();
    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    for (r, g) in groups.iter().enumerate() {
        if val_groups.contains(g) {
            val_rows.push(r);
        } else {
            train_rows.push(r);
        }
    }
    (train_rows, val_rows)
}

/// Train a model on the given design matrix.
///
/// Fully deterministic for a given config seed: initialization, the
/// validation split, and each epoch's shuffle order all derive from it.
/// Returns the parameters of the best validation epoch.
pub fn train(
    matrix: ArrayView2<'_, f64>,
    labels: &[usize],
    groups: &[String],
    config: &DfgConfig,
) -> Result<(DfgModel, TrainLog)> {
    config.validate()?;
    assert_eq!(matrix.nrows(), labels.len());
    assert_eq!(matrix.nrows(), groups.len());
    let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClassTrainSet);
    }
    if let Some(&max) = classes.iter().max() {
        if max >= config.n_classes {
            return Err(Error::InvalidModel(format!(
                "label {max} outside configured {} classes",
                config.n_classes
            )));
        }
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SALT_INIT));
    let mut model = DfgModel::init(config, matrix.ncols(), &mut init_rng)?;
    let mut adam = Adam::new(&model);
    let (train_rows, val_rows) = validation_split(groups, config.seed);

    let mut log = TrainLog { epochs: Vec::new(), stopped_epoch: 0, best_epoch: 0 };
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best_params: Option<DfgModel> = None;

    for epoch in 1..=config.max_epochs {
        let mut order = train_rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SALT_EPOCH ^ ((epoch as u64) << 8)));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = matrix.select(ndarray::Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&r| labels[r]).collect();
            let g = gradients(&model, xb.view(), &yb)?;
            adam.update(&mut model, &g, config.learning_rate);
        }
        let train_loss = mean_loss(&model, matrix, labels, &train_rows)?;
        let val_loss = mean_loss(&model, matrix, labels, &val_rows)?;
        log.epochs.push((train_loss, val_loss));
        log.stopped_epoch = epoch;
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            log.best_epoch = epoch;
            best_params = Some(model.clone());
        }
        if stop {
            break;
        }
    }
    Ok((best_params.expect("at least one epoch ran"), log))
}
