//! From-scratch 3-layer stacked LSTM classifier.
//!
//! Architecture: three LSTM layers run over the input sequence, the final
//! timestep's hidden state feeds a dense embedding layer with ReLU (the
//! penultimate layer whose activations become state vectors for the density
//! pipeline), then a linear class head trained with softmax cross-entropy on
//! soft labels. Optimization is mini-batch Adam with exact gradients from
//! backpropagation through time.
//!
//! Gate order within the stacked 4h rows is input, forget, candidate, output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::augment::SoftLabel;
use crate::error::{Error, Result};
use crate::numeric::{argmax, matmul_a_bt, matmul_at_b, Matrix};
use crate::rng::SeededRng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden: [usize; 3],
    pub embed_dim: usize,
    pub n_classes: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.hidden[0],
            self.hidden[1],
            self.hidden[2],
            self.embed_dim,
            self.n_classes,
            self.seq_len,
            self.batch_size,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("zero dimension in LSTM config".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("negative learning rate".into()));
        }
        Ok(())
    }
}

/// One LSTM layer: input weights (4h x in), recurrent weights (4h x h),
/// bias (4h).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub layers: Vec<LayerParams>,
    /// Embedding layer, embed_dim x hidden[2].
    pub dense1_w: Matrix,
    pub dense1_b: Vec<f64>,
    /// Class head, n_classes x embed_dim.
    pub dense2_w: Matrix,
    pub dense2_b: Vec<f64>,
}

impl LstmParams {
    fn zeros_like(cfg: &LstmConfig) -> Self {
        let ins = [cfg.input_dim, cfg.hidden[0], cfg.hidden[1]];
        LstmParams {
            layers: (0..3)
                .map(|l| LayerParams {
                    w: Matrix::zeros(4 * cfg.hidden[l], ins[l]),
                    u: Matrix::zeros(4 * cfg.hidden[l], cfg.hidden[l]),
                    b: vec![0.0; 4 * cfg.hidden[l]],
                })
                .collect(),
            dense1_w: Matrix::zeros(cfg.embed_dim, cfg.hidden[2]),
            dense1_b: vec![0.0; cfg.embed_dim],
            dense2_w: Matrix::zeros(cfg.n_classes, cfg.embed_dim),
            dense2_b: vec![0.0; cfg.n_classes],
        }
    }

    /// All parameter blocks in a fixed order (layer w/u/b, dense1, dense2).
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 4);
        for l in &self.layers {
            out.push(l.w.as_slice());
            out.push(l.u.as_slice());
            out.push(l.b.as_slice());
        }
        out.push(self.dense1_w.as_slice());
        out.push(&self.dense1_b);
        out.push(self.dense2_w.as_slice());
        out.push(&self.dense2_b);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 4);
        for l in self.layers.iter_mut() {
            out.push(l.w.as_mut_slice());
            out.push(l.u.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out.push(self.dense1_w.as_mut_slice());
        out.push(&mut self.dense1_b);
        out.push(self.dense2_w.as_mut_slice());
        out.push(&mut self.dense2_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Adam accumulators, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: LstmParams,
    pub v: LstmParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(cfg: &LstmConfig) -> Self {
        AdamState {
            m: LstmParams::zeros_like(cfg),
            v: LstmParams::zeros_like(cfg),
            t: 0,
        }
    }
}

/// Weights ~ uniform(-s, s) with s = 1/sqrt(fan_in); forget-gate bias 1,
/// all other biases 0.
pub fn init_lstm(cfg: &LstmConfig, rng: &mut SeededRng) -> Result<(LstmParams, AdamState)> {
    cfg.validate()?;
    let mut params = LstmParams::zeros_like(cfg);
    let fill = |m: &mut Matrix, rng: &mut SeededRng| {
        let s = 1.0 / (m.cols() as f64).sqrt();
        for x in m.as_mut_slice() {
            *x = rng.uniform(-s, s);
        }
    };
    for l in 0..3 {
        fill(&mut params.layers[l].w, rng);
        fill(&mut params.layers[l].u, rng);
        let h = cfg.hidden[l];
        for x in &mut params.layers[l].b[h..2 * h] {
            *x = 1.0;
        }
    }
    fill(&mut params.dense1_w, rng);
    fill(&mut params.dense2_w, rng);
    Ok((params, AdamState::new(cfg)))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-timestep caches for one layer.
struct LayerCache {
    /// Activated gates per timestep, batch x 4h.
    gates: Vec<Matrix>,
    /// Cell states per timestep, batch x h.
    c: Vec<Matrix>,
    tanh_c: Vec<Matrix>,
    h: Vec<Matrix>,
}

pub struct ForwardCache {
    /// Layer-0 inputs per timestep, batch x input_dim.
    inputs: Vec<Matrix>,
    layers: Vec<LayerCache>,
    pre_relu: Matrix,
    pub embedding: Matrix,
    pub logits: Matrix,
}

/// One LSTM cell step for a batch: gates = x W^T + h_prev U^T + b, then the
/// standard cell update. Returns (gates, c, tanh_c, h).
fn layer_step(
    layer: &LayerParams,
    x_t: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
    let batch = x_t.rows();
    let h_dim = layer.u.cols();
    let mut gates = matmul_a_bt(x_t, &layer.w)?;
    let rec = matmul_a_bt(h_prev, &layer.u)?;
    gates.axpy(1.0, &rec)?;
    let mut c = Matrix::zeros(batch, h_dim);
    let mut tanh_c = Matrix::zeros(batch, h_dim);
    let mut h = Matrix::zeros(batch, h_dim);
    for bi in 0..batch {
        let grow = gates.row_mut(bi);
        for (g, &bias) in grow.iter_mut().zip(&layer.b) {
            *g += bias;
        }
        // Activate in place: [i f g o] blocks of h_dim.
        for k in 0..h_dim {
            grow[k] = sigmoid(grow[k]);
            grow[h_dim + k] = sigmoid(grow[h_dim + k]);
            grow[2 * h_dim + k] = grow[2 * h_dim + k].tanh();
            grow[3 * h_dim + k] = sigmoid(grow[3 * h_dim + k]);
        }
        let cp = c_prev.row(bi);
        let crow = c.row_mut(bi);
        for k in 0..h_dim {
            crow[k] = grow[h_dim + k] * cp[k] + grow[k] * grow[2 * h_dim + k];
        }
        let trow = tanh_c.row_mut(bi);
        let hrow = h.row_mut(bi);
        for k in 0..h_dim {
            trow[k] = crow[k].tanh();
            hrow[k] = grow[3 * h_dim + k] * trow[k];
        }
    }
    Ok((gates, c, tanh_c, h))
}

/// Single-sample cell step; returns (h_t, c_t).
pub fn lstm_cell_forward(
    layer: &LayerParams,
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = Matrix::from_vec(1, x_t.len(), x_t.to_vec())?;
    let h = Matrix::from_vec(1, h_prev.len(), h_prev.to_vec())?;
    let c = Matrix::from_vec(1, c_prev.len(), c_prev.to_vec())?;
    let (_, c_t, _, h_t) = layer_step(layer, &x, &h, &c)?;
    Ok((h_t.into_vec(), c_t.into_vec()))
}

/// Batched forward pass. Every sample must already be seq_len x input_dim
/// (see [`fit_to_seq_len`]).
pub fn forward_batch(
    params: &LstmParams,
    cfg: &LstmConfig,
    samples: &[&Matrix],
) -> Result<ForwardCache> {
    let batch = samples.len();
    if batch == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    for s in samples {
        if s.rows() != cfg.seq_len || s.cols() != cfg.input_dim {
            return Err(Error::Shape(format!(
                "sample is {}x{}, expected {}x{}",
                s.rows(),
                s.cols(),
                cfg.seq_len,
                cfg.input_dim
            )));
        }
    }
    // Gather timestep-major input matrices.
    let mut inputs = Vec::with_capacity(cfg.seq_len);
    for t in 0..cfg.seq_len {
        let mut x_t = Matrix::zeros(batch, cfg.input_dim);
        for (bi, s) in samples.iter().enumerate() {
            x_t.row_mut(bi).copy_from_slice(s.row(t));
        }
        inputs.push(x_t);
    }

    let mut layers = Vec::with_capacity(3);
    let mut layer_input: Vec<Matrix> = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let h_dim = cfg.hidden[l];
        let xs: &[Matrix] = if l == 0 { &inputs } else { &layer_input };
        let mut cache = LayerCache {
            gates: Vec::with_capacity(cfg.seq_len),
            c: Vec::with_capacity(cfg.seq_len),
            tanh_c: Vec::with_capacity(cfg.seq_len),
            h: Vec::with_capacity(cfg.seq_len),
        };
        let mut h_prev = Matrix::zeros(batch, h_dim);
        let mut c_prev = Matrix::zeros(batch, h_dim);
        for x_t in xs {
            let (gates, c, tanh_c, h) = layer_step(layer, x_t, &h_prev, &c_prev)?;
            h_prev = h.clone();
            c_prev = c.clone();
            cache.gates.push(gates);
            cache.c.push(c);
            cache.tanh_c.push(tanh_c);
            cache.h.push(h);
        }
        layer_input = cache.h.clone();
        layers.push(cache);
    }

    let h_last = &layers[2].h[cfg.seq_len - 1];
    let mut pre_relu = matmul_a_bt(h_last, &params.dense1_w)?;
    for bi in 0..batch {
        for (x, &b) in pre_relu.row_mut(bi).iter_mut().zip(&params.dense1_b) {
            *x += b;
        }
    }
    let embedding = pre_relu.map(|x| x.max(0.0));
    let mut logits = matmul_a_bt(&embedding, &params.dense2_w)?;
    for bi in 0..batch {
        for (x, &b) in logits.row_mut(bi).iter_mut().zip(&params.dense2_b) {
            *x += b;
        }
    }
    Ok(ForwardCache {
        inputs,
        layers,
        pre_relu,
        embedding,
        logits,
    })
}

/// Single-sample forward: (logits, penultimate embedding).
pub fn forward(params: &LstmParams, cfg: &LstmConfig, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = forward_batch(params, cfg, &[x])?;
    Ok((
        cache.logits.row(0).to_vec(),
        cache.embedding.row(0).to_vec(),
    ))
}

/// Softmax cross-entropy on a soft target. Returns (loss, d loss / d logits).
pub fn loss_ce(logits: &[f64], target: &SoftLabel) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.n_classes() {
        return Err(Error::Shape(format!(
            "{} logits vs {} classes",
            logits.len(),
            target.n_classes()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &t) in logits.iter().zip(target.probs()) {
        let log_p = x - log_z;
        loss -= t * log_p;
        grad.push(log_p.exp() - t);
    }
    Ok((loss, grad))
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, &x) in out.iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
    out
}

/// Exact gradients of the batch loss with respect to every parameter, via
/// backpropagation through time. `grad_logits` must already carry any batch
/// normalization (the training loop divides by batch size).
pub fn backward_batch(
    params: &LstmParams,
    cfg: &LstmConfig,
    cache: &ForwardCache,
    grad_logits: &Matrix,
) -> Result<LstmParams> {
    let batch = grad_logits.rows();
    if grad_logits.cols() != cfg.n_classes || cache.logits.rows() != batch {
        return Err(Error::Shape("grad_logits does not match cache".into()));
    }
    let mut grads = LstmParams::zeros_like(cfg);

    // Class head.
    grads.dense2_w = matmul_at_b(grad_logits, &cache.embedding)?;
    grads.dense2_b = col_sums(grad_logits);
    let d_emb = crate::numeric::matmul(grad_logits, &params.dense2_w)?;
    // ReLU gate on the embedding layer.
    let mut d_pre = d_emb;
    for (dp, &pre) in d_pre
        .as_mut_slice()
        .iter_mut()
        .zip(cache.pre_relu.as_slice())
    {
        if pre <= 0.0 {
            *dp = 0.0;
        }
    }
    let h_last = &cache.layers[2].h[cfg.seq_len - 1];
    grads.dense1_w = matmul_at_b(&d_pre, h_last)?;
    grads.dense1_b = col_sums(&d_pre);
    let d_h_last = crate::numeric::matmul(&d_pre, &params.dense1_w)?;

    // Per-timestep upstream gradient on each layer's hidden sequence.
    let mut dh_seq: Vec<Matrix> = (0..cfg.seq_len)
        .map(|_| Matrix::zeros(batch, cfg.hidden[2]))
        .collect();
    dh_seq[cfg.seq_len - 1] = d_h_last;

    for l in (0..3).rev() {
        let h_dim = cfg.hidden[l];
        let in_dim = if l == 0 { cfg.input_dim } else { cfg.hidden[l - 1] };
        let layer = &params.layers[l];
        let lc = &cache.layers[l];
        let mut dh_rec = Matrix::zeros(batch, h_dim);
        let mut dc_rec = Matrix::zeros(batch, h_dim);
        let mut dx_seq: Vec<Matrix> = Vec::with_capacity(cfg.seq_len);
        for _ in 0..cfg.seq_len {
            dx_seq.push(Matrix::zeros(batch, in_dim));
        }
        for t in (0..cfg.seq_len).rev() {
            let mut d_gates = Matrix::zeros(batch, 4 * h_dim);
            for bi in 0..batch {
                let gates = lc.gates[t].row(bi);
                let tanh_c = lc.tanh_c[t].row(bi);
                let dh_up = dh_seq[t].row(bi);
                let dh_r = dh_rec.row(bi);
                let dc_r = dc_rec.row(bi);
                let dg_row = d_gates.row_mut(bi);
                let zero_prev = vec![0.0; h_dim];
                let c_prev: &[f64] = if t == 0 {
                    &zero_prev
                } else {
                    lc.c[t - 1].row(bi)
                };
                for k in 0..h_dim {
                    let (ig, fg, gg, og) = (
                        gates[k],
                        gates[h_dim + k],
                        gates[2 * h_dim + k],
                        gates[3 * h_dim + k],
                    );
                    let dh = dh_up[k] + dh_r[k];
                    let d_o = dh * tanh_c[k];
                    let dc = dh * og * (1.0 - tanh_c[k] * tanh_c[k]) + dc_r[k];
                    let d_i = dc * gg;
                    let d_f = dc * c_prev[k];
                    let d_g = dc * ig;
                    dg_row[k] = d_i * ig * (1.0 - ig);
                    dg_row[h_dim + k] = d_f * fg * (1.0 - fg);
                    dg_row[2 * h_dim + k] = d_g * (1.0 - gg * gg);
                    dg_row[3 * h_dim + k] = d_o * og * (1.0 - og);
                }
            }
            // dc_rec for t-1: dc * f. Recompute dc into dc_rec.
            let mut next_dc = Matrix::zeros(batch, h_dim);
            for bi in 0..batch {
                let gates = lc.gates[t].row(bi);
                let tanh_c = lc.tanh_c[t].row(bi);
                let dh_up = dh_seq[t].row(bi);
                let dh_r = dh_rec.row(bi);
                let dc_r = dc_rec.row(bi);
                let out = next_dc.row_mut(bi);
                for k in 0..h_dim {
                    let og = gates[3 * h_dim + k];
                    let fg = gates[h_dim + k];
                    let dh = dh_up[k] + dh_r[k];
                    let dc = dh * og * (1.0 - tanh_c[k] * tanh_c[k]) + dc_r[k];
                    out[k] = dc * fg;
                }
            }
            let x_t: &Matrix = if l == 0 {
                &cache.inputs[t]
            } else {
                &cache.layers[l - 1].h[t]
            };
            grads.layers[l].w.axpy(1.0, &matmul_at_b(&d_gates, x_t)?)?;
            if t > 0 {
                grads.layers[l]
                    .u
                    .axpy(1.0, &matmul_at_b(&d_gates, &lc.h[t - 1])?)?;
            }
            for (gb, s) in grads.layers[l].b.iter_mut().zip(col_sums(&d_gates)) {
                *gb += s;
            }
            dx_seq[t] = crate::numeric::matmul(&d_gates, &layer.w)?;
            dh_rec = if t > 0 {
                crate::numeric::matmul(&d_gates, &layer.u)?
            } else {
                Matrix::zeros(batch, h_dim)
            };
            dc_rec = next_dc;
        }
        dh_seq = dx_seq;
    }
    Ok(grads)
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let mut p_slices = params.slices_mut();
    let g_slices = grads.slices();
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    for s in 0..p_slices.len() {
        let (p, g) = (&mut p_slices[s], g_slices[s]);
        let (m, v) = (&mut m_slices[s], &mut v_slices[s]);
        for k in 0..p.len() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Pads with zero rows or truncates to seq_len rows.
pub fn fit_to_seq_len(m: &Matrix, seq_len: usize, input_dim: usize) -> Result<Matrix> {
    if m.cols() != input_dim {
        return Err(Error::Shape(format!(
            "feature dim {} vs expected {input_dim}",
            m.cols()
        )));
    }
    if m.rows() == seq_len {
        return Ok(m.clone());
    }
    let mut out = Matrix::zeros(seq_len, input_dim);
    for t in 0..seq_len.min(m.rows()) {
        out.row_mut(t).copy_from_slice(m.row(t));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

/// Mini-batch training with seeded per-epoch shuffling. Training accuracy is
/// measured on the pre-update logits of each batch during the pass.
pub fn train(
    cfg: &LstmConfig,
    train_set: &[(Matrix, SoftLabel)],
    val_set: &[(Matrix, SoftLabel)],
) -> Result<(LstmParams, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let fitted: Vec<(Matrix, &SoftLabel)> = train_set
        .iter()
        .map(|(m, l)| Ok((fit_to_seq_len(m, cfg.seq_len, cfg.input_dim)?, l)))
        .collect::<Result<_>>()?;
    let mut rng = SeededRng::new(cfg.seed);
    let (mut params, mut adam) = init_lstm(cfg, &mut rng)?;
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..fitted.len()).collect();

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&Matrix> = chunk.iter().map(|&i| &fitted[i].0).collect();
            let cache = forward_batch(&params, cfg, &xs)?;
            let batch = chunk.len();
            let mut grad_logits = Matrix::zeros(batch, cfg.n_classes);
            for (bi, &i) in chunk.iter().enumerate() {
                let target = fitted[i].1;
                let (loss, grad) = loss_ce(cache.logits.row(bi), target)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss at epoch {epoch}"
                    )));
                }
                loss_sum += loss;
                if argmax(cache.logits.row(bi)) == target.class() {
                    correct += 1;
                }
                for (g, v) in grad_logits.row_mut(bi).iter_mut().zip(grad) {
                    *g = v / batch as f64;
                }
            }
            let mut grads = backward_batch(&params, cfg, &cache, &grad_logits)?;
            if let Some(max_norm) = cfg.clip_norm {
                let norm: f64 = grads
                    .slices()
                    .iter()
                    .map(|s| s.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max_norm {
                    let scale = max_norm / norm;
                    for s in grads.slices_mut() {
                        for x in s {
                            *x *= scale;
                        }
                    }
                }
            }
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
        }
        let val_acc = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&params, cfg, val_set)?)
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / fitted.len() as f64,
            train_acc: correct as f64 / fitted.len() as f64,
            val_acc,
        });
    }
    Ok((params, history))
}

/// Fraction of samples whose argmax prediction matches the argmax target.
pub fn evaluate(
    params: &LstmParams,
    cfg: &LstmConfig,
    dataset: &[(Matrix, SoftLabel)],
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("evaluate on empty dataset".into()));
    }
    let mut correct = 0usize;
    for chunk in dataset.chunks(256) {
        let fitted: Vec<Matrix> = chunk
            .iter()
            .map(|(m, _)| fit_to_seq_len(m, cfg.seq_len, cfg.input_dim))
            .collect::<Result<_>>()?;
        let refs: Vec<&Matrix> = fitted.iter().collect();
        let cache = forward_batch(params, cfg, &refs)?;
        for (bi, (_, label)) in chunk.iter().enumerate() {
            if argmax(cache.logits.row(bi)) == label.class() {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Penultimate-layer (embedding) activations for every sample.
pub fn extract_embeddings(
    params: &LstmParams,
    cfg: &LstmConfig,
    samples: &[Matrix],
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let fitted: Vec<Matrix> = chunk
            .iter()
            .map(|m| fit_to_seq_len(m, cfg.seq_len, cfg.input_dim))
            .collect::<Result<_>>()?;
        let refs: Vec<&Matrix> = fitted.iter().collect();
        let cache = forward_batch(params, cfg, &refs)?;
        for bi in 0..chunk.len() {
            out.push(cache.embedding.row(bi).to_vec());
        }
    }
    Ok(out)
}

const CKPT_MAGIC: &[u8; 8] = b"LSTMCKPT";
const CKPT_VERSION: u32 = 1;

/// Checkpoint layout: magic, version, config block (u64 fields + f64
/// learning rate + optional clip), parameter blocks as little-endian f64 in
/// the fixed `slices()` order.
pub fn save_checkpoint(path: &Path, cfg: &LstmConfig, params: &LstmParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_u32::<LittleEndian>(CKPT_VERSION)?;
    for v in [
        cfg.input_dim,
        cfg.hidden[0],
        cfg.hidden[1],
        cfg.hidden[2],
        cfg.embed_dim,
        cfg.n_classes,
        cfg.seq_len,
        cfg.epochs,
        cfg.batch_size,
    ] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    w.write_u64::<LittleEndian>(cfg.seed)?;
    w.write_f64::<LittleEndian>(cfg.learning_rate)?;
    w.write_u8(cfg.clip_norm.is_some() as u8)?;
    w.write_f64::<LittleEndian>(cfg.clip_norm.unwrap_or(0.0))?;
    for s in params.slices() {
        for &x in s {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(LstmConfig, LstmParams)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated(path))?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| truncated(path))?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_u64::<LittleEndian>().map_err(|_| truncated(path))
    };
    let fields: Vec<u64> = (0..9)
        .map(|_| read_u64(&mut r))
        .collect::<Result<_>>()?;
    let seed = read_u64(&mut r)?;
    let learning_rate = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
    let has_clip = r.read_u8().map_err(|_| truncated(path))? != 0;
    let clip = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
    let cfg = LstmConfig {
        input_dim: fields[0] as usize,
        hidden: [fields[1] as usize, fields[2] as usize, fields[3] as usize],
        embed_dim: fields[4] as usize,
        n_classes: fields[5] as usize,
        seq_len: fields[6] as usize,
        epochs: fields[7] as usize,
        batch_size: fields[8] as usize,
        seed,
        learning_rate,
        clip_norm: has_clip.then_some(clip),
    };
    cfg.validate()?;
    let mut params = LstmParams::zeros_like(&cfg);
    for s in params.slices_mut() {
        for x in s {
            *x = r.read_f64::<LittleEndian>().map_err(|_| truncated(path))?;
        }
    }
    Ok((cfg, params))
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated checkpoint", path.display()))
}
