//! Deep feature generation network.
//!
//! Tabular input is reshaped row-major onto a square grid (zero-padded),
//! passed through a same-padding convolution, ReLU, and max pooling; the
//! flattened pooled maps are the generated features, concatenated with
//! the raw input and fed to a ReLU MLP with a softmax head. All math is
//! 64-bit and the gradients are exact analytic backpropagation.

mod train;

pub use train::{train, TrainLog};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfgConfig {
    pub n_filters: usize,
    pub kernel: (usize, usize),
    pub pool_width: usize,
    pub hidden_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub n_classes: usize,
    /// False disables the convolutional pathway (raw features only).
    pub conv_enabled: bool,
}

impl Default for DfgConfig {
    fn default() -> Self {
        DfgConfig {
            n_filters: 14,
            kernel: (7, 7),
            pool_width: 2,
            hidden_sizes: vec![64],
            max_epochs: 500,
            patience: 5,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            n_classes: 2,
            conv_enabled: true,
        }
    }
}

impl DfgConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_filters >= 1
            && self.kernel.0 % 2 == 1
            && self.kernel.1 % 2 == 1
            && self.pool_width >= 1
            && self.patience >= 1
            && self.max_epochs >= 1
            && self.batch_size >= 1
            && self.n_classes >= 2
            && self.learning_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("invalid configuration: {self:?}")))
        }
    }
}

/// Configuration variant whose classifier consumes raw features only
/// (generated width 0), all else equal.
pub fn ablate_dfg(config: &DfgConfig) -> DfgConfig {
    DfgConfig { conv_enabled: false, ..config.clone() }
}

/// Square grid side for a D-wide input: S = ceil(sqrt(D)).
pub fn grid_side(input_dim: usize) -> usize {
    (input_dim as f64).sqrt().ceil() as usize
}

/// Zero-pad a D-vector to S^2 and place it row-major on an SxS grid.
pub fn reshape_to_grid(x: &[f64]) -> Vec<f64> {
    let s = grid_side(x.len());
    let mut grid = vec![0.0; s * s];
    grid[..x.len()].copy_from_slice(x);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major out_dim x in_dim.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfgModel {
    pub config: DfgConfig,
    pub input_dim: usize,
    pub grid_side: usize,
    /// n_filters x kh x kw, row-major.
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// Hidden layers followed by the output layer.
    pub dense: Vec<DenseLayer>,
}

impl DfgModel {
    /// Pooled map side: ceil(S / pool_width).
    pub fn pooled_side(&self) -> usize {
        self.grid_side.div_ceil(self.config.pool_width)
    }

    /// Generated feature count G (0 when the conv pathway is ablated).
    pub fn generated_dim(&self) -> usize {
        if self.config.conv_enabled {
            self.config.n_filters * self.pooled_side() * self.pooled_side()
        } else {
            0
        }
    }

    /// Classifier input width D + G.
    pub fn classifier_input_dim(&self) -> usize {
        self.input_dim + self.generated_dim()
    }

    /// Seeded Glorot-uniform initialization.
    pub fn init(config: &DfgConfig, input_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        assert!(input_dim >= 1, "input_dim must be at least 1");
        let s = grid_side(input_dim);
        let (kh, kw) = config.kernel;
        let fan = (kh * kw) as f64;
        let conv_a = (6.0 / (fan + fan * config.n_filters as f64)).sqrt();
        let conv_w: Vec<f64> =
            (0..config.n_filters * kh * kw).map(|_| rng.random_range(-conv_a..conv_a)).collect();
        let conv_b = vec![0.0; config.n_filters];

        let mut model = DfgModel {
            config: config.clone(),
            input_dim,
            grid_side: s,
            conv_w,
            conv_b,
            dense: Vec::new(),
        };
        let mut widths = vec![model.classifier_input_dim()];
        widths.extend(config.hidden_sizes.iter().copied());
        widths.push(config.n_classes);
        for t in 0..widths.len() - 1 {
            let (ind, outd) = (widths[t], widths[t + 1]);
            let a = (6.0 / (ind + outd) as f64).sqrt();
            model.dense.push(DenseLayer {
                in_dim: ind,
                out_dim: outd,
                w: (0..ind * outd).map(|_| rng.random_range(-a..a)).collect(),
                b: vec![0.0; outd],
            });
        }
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.conv_w.len()
            + self.conv_b.len()
            + self.dense.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
    }
}

/// Cached activations of one forward evaluation, kept for backprop.
pub(crate) struct ForwardPass {
    /// Pre-activation conv maps, F x S x S.
    pub conv_pre: Vec<f64>,
    /// Argmax flat index (into the S x S map) per pooled cell, F x P x P.
    pub pool_argmax: Vec<usize>,
    /// Classifier input: raw features then pooled activations.
    pub concat: Vec<f64>,
    /// Post-activation outputs of every dense layer (ReLU for hidden,
    /// raw logits for the last).
    pub dense_out: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn forward_pass(model: &DfgModel, x: ArrayView1<'_, f64>) -> Result<ForwardPass> {
    if x.len() != model.input_dim {
        return Err(Error::DimMismatch { expected: model.input_dim, got: x.len() });
    }
    let s = model.grid_side;
    let f = model.config.n_filters;
    let (kh, kw) = model.config.kernel;
    let (ph, pw) = (kh / 2, kw / 2);
    let pool = model.config.pool_width;
    let ps = model.pooled_side();

    let mut conv_pre = Vec::new();
    let mut pool_argmax = Vec::new();
    let mut concat = Vec::with_capacity(model.classifier_input_dim());
    concat.extend(x.iter().copied());

    if model.config.conv_enabled {
        let grid = reshape_to_grid(&x.to_vec());
        conv_pre = vec![0.0; f * s * s];
        for fi in 0..f {
            for r in 0..s {
                for c in 0..s {
                    let mut acc = model.conv_b[fi];
                    for u in 0..kh {
                        for v in 0..kw {
                            let rr = r as i64 + u as i64 - ph as i64;
                            let cc = c as i64 + v as i64 - pw as i64;
                            if rr >= 0 && cc >= 0 && (rr as usize) < s && (cc as usize) < s {
                                acc += model.conv_w[fi * kh * kw + u * kw + v]
                                    * grid[rr as usize * s + cc as usize];
                            }
                        }
                    }
                    conv_pre[fi * s * s + r * s + c] = acc;
                }
            }
        }
        // ReLU then max pool (stride = width, ceil output, first-index
        // tie-break).
        pool_argmax = vec![0usize; f * ps * ps];
        for fi in 0..f {
            for pr in 0..ps {
                for pc in 0..ps {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for r in (pr * pool)..((pr * pool + pool).min(s)) {
                        for c in (pc * pool)..((pc * pool + pool).min(s)) {
                            let v = conv_pre[fi * s * s + r * s + c].max(0.0);
                            if v > best {
                                best = v;
                                best_idx = r * s + c;
                            }
                        }
                    }
                    pool_argmax[fi * ps * ps + pr * ps + pc] = best_idx;
                    concat.push(best);
                }
            }
        }
    }

    let mut dense_out = Vec::with_capacity(model.dense.len());
    let mut cur = concat.clone();
    for (li, layer) in model.dense.iter().enumerate() {
        let mut out = vec![0.0; layer.out_dim];
        for (o, out_v) in out.iter_mut().enumerate() {
            let mut acc = layer.b[o];
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (w, v) in row.iter().zip(&cur) {
                acc += w * v;
            }
            *out_v = if li + 1 < model.dense.len() { acc.max(0.0) } else { acc };
        }
        dense_out.push(out.clone());
        cur = out;
    }
    let probabilities = softmax(dense_out.last().expect("at least the output layer"));
    Ok(ForwardPass { conv_pre, pool_argmax, concat, dense_out, probabilities })
}

/// Forward evaluation: (logits, generated features, probabilities).
pub fn forward(model: &DfgModel, x: ArrayView1<'_, f64>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let pass = forward_pass(model, x)?;
    let logits = pass.dense_out.last().unwrap().clone();
    let generated = pass.concat[model.input_dim..].to_vec();
    Ok((logits, generated, pass.probabilities))
}

/// Cross-entropy of one prediction: -log p[true], input clamped at 1e-12.
pub fn loss(probabilities: &[f64], true_class: usize) -> f64 {
    assert!(true_class < probabilities.len(), "class index in range");
    -probabilities[true_class].max(1e-12).ln()
}

/// Parameter-shaped gradient set.
#[derive(Debug, Clone, PartialEq)]
pub struct DfgGradients {
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub dense_w: Vec<Vec<f64>>,
    pub dense_b: Vec<Vec<f64>>,
}

impl DfgGradients {
    fn zeros(model: &DfgModel) -> Self {
        DfgGradients {
            conv_w: vec![0.0; model.conv_w.len()],
            conv_b: vec![0.0; model.conv_b.len()],
            dense_w: model.dense.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            dense_b: model.dense.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }
}

/// Exact analytic gradient of the mean batch loss with respect to every
/// parameter. Max pooling routes gradient to the argmax cell; ReLU gates
/// on strictly positive pre-activations.
pub fn gradients(model: &DfgModel, batch_x: ArrayView2<'_, f64>, batch_y: &[usize]) -> Result<DfgGradients> {
    assert!(!batch_y.is_empty(), "batch must be non-empty");
    assert_eq!(batch_x.nrows(), batch_y.len());
    let mut g = DfgGradients::zeros(model);
    let bsz = batch_y.len() as f64;
    let s = model.grid_side;
    let f = model.config.n_filters;
    let (kh, kw) = model.config.kernel;
    let (ph, pw) = (kh / 2, kw / 2);
    let ps = model.pooled_side();

    for (row, &y) in batch_x.outer_iter().zip(batch_y) {
        let pass = forward_pass(model, row)?;
        // d loss / d logits, averaged over the batch.
        let nlayers = model.dense.len();
        let mut delta: Vec<f64> = pass
            .probabilities
            .iter()
            .enumerate()
            .map(|(c, &p)| (p - if c == y { 1.0 } else { 0.0 }) / bsz)
            .collect();
        let mut concat_grad = vec![0.0; pass.concat.len()];
        for li in (0..nlayers).rev() {
            let layer = &model.dense[li];
            let input: &[f64] = if li == 0 { &pass.concat } else { &pass.dense_out[li - 1] };
            for o in 0..layer.out_dim {
                g.dense_b[li][o] += delta[o];
                let wrow = &mut g.dense_w[li][o * layer.in_dim..(o + 1) * layer.in_dim];
                for (wg, v) in wrow.iter_mut().zip(input) {
                    *wg += delta[o] * v;
                }
            }
            // Propagate to the layer input, gating hidden ReLUs.
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(wrow) {
                    *p += d * w;
                }
            }
            if li == 0 {
                concat_grad = prev;
            } else {
                for (p, &out) in prev.iter_mut().zip(&pass.dense_out[li - 1]) {
                    if out <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }

        if model.config.conv_enabled {
            let grid = reshape_to_grid(&row.to_vec());
            // Unpool: pooled-cell gradients land on the argmax cell, then
            // gate by the ReLU (positive pre-activation).
            let mut pre_grad = vec![0.0; f * s * s];
            for fi in 0..f {
                for p in 0..ps * ps {
                    let gout = concat_grad[model.input_dim + fi * ps * ps + p];
                    if gout == 0.0 {
                        continue;
                    }
                    let flat = pass.pool_argmax[fi * ps * ps + p];
                    if pass.conv_pre[fi * s * s + flat] > 0.0 {
                        pre_grad[fi * s * s + flat] += gout;
                    }
                }
            }
            for fi in 0..f {
                for r in 0..s {
                    for c in 0..s {
                        let d = pre_grad[fi * s * s + r * s + c];
                        if d == 0.0 {
                            continue;
                        }
                        g.conv_b[fi] += d;
                        for u in 0..kh {
                            for v in 0..kw {
                                let rr = r as i64 + u as i64 - ph as i64;
                                let cc = c as i64 + v as i64 - pw as i64;
                                if rr >= 0 && cc >= 0 && (rr as usize) < s && (cc as usize) < s {
                                    g.conv_w[fi * kh * kw + u * kw + v] +=
                                        d * grid[rr as usize * s + cc as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Row-wise forward probabilities.
pub fn predict_proba(model: &DfgModel, matrix: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if matrix.ncols() != model.input_dim {
        return Err(Error::DimMismatch { expected: model.input_dim, got: matrix.ncols() });
    }
    let mut out = Array2::<f64>::zeros((matrix.nrows(), model.config.n_classes));
    for (ri, row) in matrix.outer_iter().enumerate() {
        let pass = forward_pass(model, row)?;
        for (ci, &p) in pass.probabilities.iter().enumerate() {
            out[[ri, ci]] = p;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Versioned JSON serialization (base64 little-endian f64 payloads)
// ---------------------------------------------------------------------------

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(data: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(data).map_err(|e| Error::InvalidModel(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidModel("payload length not a multiple of 8".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Serialize, Deserialize)]
struct DenseLayerFile {
    in_dim: usize,
    out_dim: usize,
    w: String,
    b: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    config: DfgConfig,
    input_dim: usize,
    grid_side: usize,
    conv_w: String,
    conv_b: String,
    dense: Vec<DenseLayerFile>,
}

pub fn model_to_json(model: &DfgModel) -> serde_json::Value {
    serde_json::to_value(ModelFile {
        version: MODEL_FORMAT_VERSION,
        config: model.config.clone(),
        input_dim: model.input_dim,
        grid_side: model.grid_side,
        conv_w: encode_f64s(&model.conv_w),
        conv_b: encode_f64s(&model.conv_b),
        dense: model
            .dense
            .iter()
            .map(|l| DenseLayerFile {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                w: encode_f64s(&l.w),
                b: encode_f64s(&l.b),
            })
            .collect(),
    })
    .expect("model serializes")
}

pub fn model_from_json(value: &serde_json::Value) -> Result<DfgModel> {
    let file: ModelFile = serde_json::from_value(value.clone())?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelVersion { expected: MODEL_FORMAT_VERSION, got: file.version });
    }
    let model = DfgModel {
        config: file.config,
        input_dim: file.input_dim,
        grid_side: file.grid_side,
        conv_w: decode_f64s(&file.conv_w)?,
        conv_b: decode_f64s(&file.conv_b)?,
        dense: file
            .dense
            .iter()
            .map(|l| {
                Ok(DenseLayer {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    w: decode_f64s(&l.w)?,
                    b: decode_f64s(&l.b)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    for layer in &model.dense {
        if layer.w.len() != layer.in_dim * layer.out_dim || layer.b.len() != layer.out_dim {
            return Err(Error::InvalidModel("dense layer payload sizes inconsistent".into()));
        }
    }
    if model.parameter_count() == 0
        || model.conv_w.iter().chain(&model.conv_b).any(|v| !v.is_finite())
        || model.dense.iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidModel("non-finite or empty parameters".into()));
    }
    Ok(model)
}
