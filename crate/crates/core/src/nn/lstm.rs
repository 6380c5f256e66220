//! Stacked LSTM encoder with a sigmoid output neuron.
//!
//! Gate blocks are stored stacked in the order forget, input, candidate,
//! output: `w` is `[4h × in]`, `u` is `[4h × h]` and `b` is `[4h]`, so the
//! flat parameter order is `W_f, W_i, W_g, W_o, U_f, ..., b_f, ...` per
//! layer, followed by `W_out` and `b_out`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{axpy, dot, matvec_add, matvec_t_add, orthonormalize_columns, outer_add, sigmoid};
use super::Parameters;
use crate::error::{Error, Result};
use crate::tensorize::PrefixDataset;

pub const GATE_NAMES: [&str; 4] = ["f", "i", "g", "o"];
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

/// Range of the ablation scheme that draws every tensor uniformly.
pub const UNIFORM_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Xavier-uniform input weights, orthogonal recurrent weights, forget
    /// bias +1, He-uniform output weights.
    Dedicated,
    /// Every tensor drawn from `U(-0.05, 0.05)`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Input weights of one gate, `[h × in]`.
    pub fn w_gate(&self, gate: usize) -> &[f64] {
        let n = self.hidden * self.input;
        &self.w[gate * n..(gate + 1) * n]
    }

    /// Recurrent weights of one gate, `[h × h]`.
    pub fn u_gate(&self, gate: usize) -> &[f64] {
        let n = self.hidden * self.hidden;
        &self.u[gate * n..(gate + 1) * n]
    }

    pub fn b_gate(&self, gate: usize) -> &[f64] {
        &self.b[gate * self.hidden..(gate + 1) * self.hidden]
    }
}

/// Shape of one named tensor in declared serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorShape {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// All trainable tensors. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub layers: Vec<LstmLayerParams>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| LstmLayerParams::zeros(if l == 0 { input } else { hidden }, hidden))
            .collect();
        Self {
            layers,
            w_out: vec![0.0; hidden],
            b_out: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let hidden = self.w_out.len();
        Self::zeros(self.layers[0].input, hidden, self.layers.len())
    }

    pub fn hidden(&self) -> usize {
        self.w_out.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    /// Per-gate tensor shapes in serialization order.
    pub fn shapes(&self) -> Vec<TensorShape> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, i) = (layer.hidden, layer.input);
            for (prefix, shape) in [("W", vec![h, i]), ("U", vec![h, h]), ("b", vec![h])] {
                for gate in GATE_NAMES {
                    out.push(TensorShape {
                        name: format!("layer{}.{prefix}_{gate}", l + 1),
                        shape: shape.clone(),
                    });
                }
            }
        }
        out.push(TensorShape {
            name: "W_out".into(),
            shape: vec![1, self.hidden()],
        });
        out.push(TensorShape {
            name: "b_out".into(),
            shape: vec![1],
        });
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for the given architecture.
    pub fn from_flat(input: usize, hidden: usize, layers: usize, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(input, hidden, layers);
        if flat.len() != params.num_params() {
            return Err(Error::Integrity(format!(
                "expected {} parameters, found {}",
                params.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in params.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(params)
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &LstmParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(1.0, b, a);
        }
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &self.layers {
            out.push(&layer.w);
            out.push(&layer.u);
            out.push(&layer.b);
        }
        out.push(&self.w_out);
        out.push(&self.b_out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            out.push(&mut layer.u);
            out.push(&mut layer.b);
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub params: LstmParams,
    pub init_scheme: InitScheme,
    pub seed: u64,
}

/// Builds a freshly initialized model.
pub fn init_model(hidden: usize, input_dim: usize, layers: usize, scheme: InitScheme, seed: u64) -> Result<LstmModel> {
    if hidden == 0 || input_dim == 0 {
        return Err(Error::InvalidArgument("hidden size and input width must be positive".into()));
    }
    if !(1..=2).contains(&layers) {
        return Err(Error::InvalidArgument(format!("{layers} LSTM layers requested; 1 or 2 supported")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = LstmParams::zeros(input_dim, hidden, layers);
    match scheme {
        InitScheme::Uniform => {
            for t in params.tensors_mut() {
                t.iter_mut()
                    .for_each(|x| *x = rng.random_range(-UNIFORM_INIT_RANGE..UNIFORM_INIT_RANGE));
            }
        }
        InitScheme::Dedicated => {
            for layer in &mut params.layers {
                let bound = (6.0 / (layer.input + layer.hidden) as f64).sqrt();
                layer.w.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
                let block = hidden * hidden;
                for gate in layer.u.chunks_exact_mut(block) {
                    gate.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
                    orthonormalize_columns(gate, hidden);
                }
                layer.b[FORGET * hidden..(FORGET + 1) * hidden].fill(1.0);
            }
            let bound = (6.0 / hidden as f64).sqrt();
            params.w_out.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
        }
    }
    Ok(LstmModel {
        params,
        init_scheme: scheme,
        seed,
    })
}

/// Forward activations of one layer over a sequence, kept for BPTT.
struct LayerTrace {
    /// Activated gates per step, `[rows × 4h]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Activations of a full forward pass.
pub struct ForwardCache {
    layers: Vec<LayerTrace>,
    rows: usize,
    logit: f64,
}

impl ForwardCache {
    pub fn logit(&self) -> f64 {
        self.logit
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

impl LstmModel {
    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.params.layers.len()
    }

    /// Rounds every parameter to the nearest `f32`, the precision weights
    /// are stored with.
    pub fn quantize_f32(&mut self) {
        for t in self.params.tensors_mut() {
            t.iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
    }

    fn check_input(&self, seq: &[f64], rows: usize) -> Result<()> {
        if rows == 0 {
            return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
        }
        if seq.len() < rows * self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "sequence holds {} values, {rows} rows of width {} needed",
                seq.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs the encoder over the first `length` rows of a row-major
    /// `[T × v]` block and returns the in-time probability. Rows at and
    /// after `length` are never read, so padding cannot change the output.
    pub fn forward(&self, x: &[f64], length: usize) -> Result<f64> {
        Ok(self.forward_cached(x, length)?.probability())
    }

    pub fn forward_cached(&self, seq: &[f64], rows: usize) -> Result<ForwardCache> {
        self.check_input(seq, rows)?;
        let h = self.hidden();
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.num_layers());
        for (l, p) in self.params.layers.iter().enumerate() {
            let input: &[f64] = if l == 0 { &seq[..rows * p.input] } else { &layers[l - 1].h };
            let mut tr = LayerTrace {
                gates: vec![0.0; rows * 4 * h],
                c: vec![0.0; rows * h],
                tanh_c: vec![0.0; rows * h],
                h: vec![0.0; rows * h],
            };
            for t in 0..rows {
                let x_t = &input[t * p.input..(t + 1) * p.input];
                let z = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
                z.copy_from_slice(&p.b);
                matvec_add(&p.w, x_t, z);
                if t > 0 {
                    let (before, _) = tr.h.split_at(t * h);
                    matvec_add(&p.u, &before[(t - 1) * h..], z);
                }
                for k in 0..h {
                    z[FORGET * h + k] = sigmoid(z[FORGET * h + k]);
                    z[INPUT * h + k] = sigmoid(z[INPUT * h + k]);
                    z[CANDIDATE * h + k] = z[CANDIDATE * h + k].tanh();
                    z[OUTPUT * h + k] = sigmoid(z[OUTPUT * h + k]);
                }
                for k in 0..h {
                    let c_prev = if t > 0 { tr.c[(t - 1) * h + k] } else { 0.0 };
                    let c = z[FORGET * h + k] * c_prev + z[INPUT * h + k] * z[CANDIDATE * h + k];
                    let tc = c.tanh();
                    tr.c[t * h + k] = c;
                    tr.tanh_c[t * h + k] = tc;
                    tr.h[t * h + k] = z[OUTPUT * h + k] * tc;
                }
            }
            layers.push(tr);
        }
        let top = &layers.last().expect("at least one layer").h;
        let logit = dot(&self.params.w_out, &top[(rows - 1) * h..]) + self.params.b_out[0];
        Ok(ForwardCache { layers, rows, logit })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative
    /// with respect to the output logit is `dlogit`.
    pub fn backward(&self, seq: &[f64], cache: &ForwardCache, dlogit: f64, grads: &mut LstmParams) {
        let h = self.hidden();
        let rows = cache.rows;
        let top = &cache.layers.last().expect("at least one layer").h;
        axpy(dlogit, &top[(rows - 1) * h..], &mut grads.w_out);
        grads.b_out[0] += dlogit;

        // Gradient reaching each step's hidden state from the layer above.
        let mut dh_above = vec![0.0; rows * h];
        axpy(dlogit, &self.params.w_out, &mut dh_above[(rows - 1) * h..]);

        let mut dz = vec![0.0; 4 * h];
        let mut dh_rec = vec![0.0; h];
        let mut dc_rec = vec![0.0; h];
        for l in (0..self.num_layers()).rev() {
            let p = &self.params.layers[l];
            let g = &mut grads.layers[l];
            let tr = &cache.layers[l];
            let input: &[f64] = if l == 0 { &seq[..rows * p.input] } else { &cache.layers[l - 1].h };
            let mut dx = if l > 0 { vec![0.0; rows * p.input] } else { Vec::new() };
            dh_rec.fill(0.0);
            dc_rec.fill(0.0);
            for t in (0..rows).rev() {
                let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
                for k in 0..h {
                    let f = gates[FORGET * h + k];
                    let i = gates[INPUT * h + k];
                    let cand = gates[CANDIDATE * h + k];
                    let o = gates[OUTPUT * h + k];
                    let tc = tr.tanh_c[t * h + k];
                    let c_prev = if t > 0 { tr.c[(t - 1) * h + k] } else { 0.0 };

                    let dh = dh_above[t * h + k] + dh_rec[k];
                    let dc = dc_rec[k] + dh * o * (1.0 - tc * tc);
                    dz[FORGET * h + k] = dc * c_prev * f * (1.0 - f);
                    dz[INPUT * h + k] = dc * cand * i * (1.0 - i);
                    dz[CANDIDATE * h + k] = dc * i * (1.0 - cand * cand);
                    dz[OUTPUT * h + k] = dh * tc * o * (1.0 - o);
                    dc_rec[k] = dc * f;
                }
                let x_t = &input[t * p.input..(t + 1) * p.input];
                outer_add(&dz, x_t, &mut g.w);
                axpy(1.0, &dz, &mut g.b);
                if l > 0 {
                    matvec_t_add(&p.w, &dz, &mut dx[t * p.input..(t + 1) * p.input]);
                }
                dh_rec.fill(0.0);
                if t > 0 {
                    outer_add(&dz, &tr.h[(t - 1) * h..t * h], &mut g.u);
                    matvec_t_add(&p.u, &dz, &mut dh_rec);
                }
            }
            dh_above = dx;
        }
    }

    /// Probability for every sample of a dataset, in sample order.
    pub fn predict_dataset(&self, ds: &PrefixDataset) -> Result<Vec<f64>> {
        (0..ds.len())
            .into_par_iter()
            .map(|i| Ok(self.forward_cached(ds.sequence(i), ds.rows(i))?.probability()))
            .collect()
    }
}

/// Binary cross-entropy computed from the logit, stable for large |z|.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Samples per work unit when reducing gradients; fixed so the summation
/// order does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Gradient of the mean BCE over `indices` and that mean loss.
pub fn gradients(model: &LstmModel, ds: &PrefixDataset, indices: &[usize]) -> Result<(LstmParams, f64)> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let partials: Vec<Result<(LstmParams, f64)>> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = model.params.zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let seq = ds.sequence(i);
                let cache = model.forward_cached(seq, ds.rows(i))?;
                let y = ds.label(i);
                let l = bce_with_logit(cache.logit(), y);
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss { sample: i });
                }
                loss += l;
                model.backward(seq, &cache, cache.probability() - y, &mut grads);
            }
            Ok((grads, loss))
        })
        .collect();
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for part in partials {
        let (g, l) = part?;
        total.add_assign(&g);
        loss += l;
    }
    let n = indices.len() as f64;
    total.scale(1.0 / n);
    Ok((total, loss / n))
}

/// Mean BCE of the model over a dataset.
pub fn mean_bce(model: &LstmModel, ds: &PrefixDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<Result<f64>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let cache = model.forward_cached(ds.sequence(i), ds.rows(i))?;
            let l = bce_with_logit(cache.logit(), ds.label(i));
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::NonFiniteLoss { sample: i })
            }
        })
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / ds.len() as f64)
}
