//! LSTM cell, stacked forward pass, and backpropagation through time.
//!
//! Gate equations per timestep:
//!   g = tanh(x W_xg + h W_hg + b_g)
//!   i = sigmoid(x W_xi + h W_hi + b_i)
//!   f = sigmoid(x W_xf + h W_hf + b_f)
//!   o = sigmoid(x W_xo + h W_ho + b_o)
//!   c' = f . c + i . g
//!   h' = o . tanh(c')
//! with `.` element-wise. A dense head maps the final hidden state of the
//! top layer to the forecast horizon.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{mat_vec_t_accum, outer_accum, vec_mat_accum, Mat};

pub const GATE_G: usize = 0;
pub const GATE_I: usize = 1;
pub const GATE_F: usize = 2;
pub const GATE_O: usize = 3;
const GATES: usize = 4;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights for one LSTM layer: per gate, an input matrix `[in_dim x hidden]`,
/// a recurrent matrix `[hidden x hidden]`, and a bias vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerParams {
    pub w_x: [Mat; 4],
    pub w_h: [Mat; 4],
    pub b: [Vec<f64>; 4],
}

impl LayerParams {
    pub fn input_dim(&self) -> usize {
        self.w_x[0].rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h[0].rows()
    }
}

/// All trainable parameters: the LSTM stack plus the dense forecast head.
/// The same shape doubles as the gradient and optimizer-moment container.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LstmParams {
    pub layers: Vec<LayerParams>,
    pub dense_w: Mat,
    pub dense_b: Vec<f64>,
}

impl LstmParams {
    /// Seeded initialization: weights uniform in +-1/sqrt(fan-in), biases
    /// zero except the forget gate at 1.0.
    pub fn init(
        input_dim: usize,
        hidden: usize,
        n_layers: usize,
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> LstmParams {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Mat::from_vec(rows, cols, data).expect("sized to fit")
        };
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let in_dim = if l == 0 { input_dim } else { hidden };
            let w_x = std::array::from_fn(|_| uniform(in_dim, hidden, in_dim));
            let w_h = std::array::from_fn(|_| uniform(hidden, hidden, hidden));
            let mut b: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
            b[GATE_F] = vec![1.0; hidden];
            layers.push(LayerParams { w_x, w_h, b });
        }
        let dense_w = uniform(hidden, horizon, hidden);
        let dense_b = vec![0.0; horizon];
        LstmParams {
            layers,
            dense_w,
            dense_b,
        }
    }

    pub fn zeros_like(other: &LstmParams) -> LstmParams {
        let layers = other
            .layers
            .iter()
            .map(|l| LayerParams {
                w_x: std::array::from_fn(|g| Mat::zeros(l.w_x[g].rows(), l.w_x[g].cols())),
                w_h: std::array::from_fn(|g| Mat::zeros(l.w_h[g].rows(), l.w_h[g].cols())),
                b: std::array::from_fn(|g| vec![0.0; l.b[g].len()]),
            })
            .collect();
        LstmParams {
            layers,
            dense_w: Mat::zeros(other.dense_w.rows(), other.dense_w.cols()),
            dense_b: vec![0.0; other.dense_b.len()],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn horizon(&self) -> usize {
        self.dense_b.len()
    }

    /// All parameter buffers in a fixed order, for optimizers and
    /// finite-difference checks.
    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for m in layer.w_x.iter_mut() {
                out.push(m.data_mut());
            }
            for m in layer.w_h.iter_mut() {
                out.push(m.data_mut());
            }
            for b in layer.b.iter_mut() {
                out.push(b.as_mut_slice());
            }
        }
        out.push(self.dense_w.data_mut());
        out.push(self.dense_b.as_mut_slice());
        out
    }

    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            for m in layer.w_x.iter() {
                out.push(m.data());
            }
            for m in layer.w_h.iter() {
                out.push(m.data());
            }
            for b in layer.b.iter() {
                out.push(b.as_slice());
            }
        }
        out.push(self.dense_w.data());
        out.push(self.dense_b.as_slice());
        out
    }

    /// Human-readable names parallel to [`Self::buffers`].
    pub fn buffer_names(&self) -> Vec<String> {
        let gate = ["g", "i", "f", "o"];
        let mut out = Vec::new();
        for l in 0..self.layers.len() {
            for g in gate {
                out.push(format!("layer{l}.w_x{g}"));
            }
            for g in gate {
                out.push(format!("layer{l}.w_h{g}"));
            }
            for g in gate {
                out.push(format!("layer{l}.b_{g}"));
            }
        }
        out.push("dense_w".into());
        out.push("dense_b".into());
        out
    }
}

/// Hidden and cell state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> LstmState {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Per-timestep activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub gates: [Vec<f64>; 4],
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

fn gate_preactivations(x: &[f64], h_prev: &[f64], layer: &LayerParams) -> [Vec<f64>; 4] {
    std::array::from_fn(|g| {
        let mut pre = layer.b[g].clone();
        vec_mat_accum(x, &layer.w_x[g], &mut pre);
        vec_mat_accum(h_prev, &layer.w_h[g], &mut pre);
        pre
    })
}

fn cell_step(x: &[f64], state: &LstmState, layer: &LayerParams) -> CellCache {
    let hidden = layer.hidden_dim();
    let pre = gate_preactivations(x, &state.h, layer);
    let g: Vec<f64> = pre[GATE_G].iter().map(|&z| z.tanh()).collect();
    let i: Vec<f64> = pre[GATE_I].iter().map(|&z| sigmoid(z)).collect();
    let f: Vec<f64> = pre[GATE_F].iter().map(|&z| sigmoid(z)).collect();
    let o: Vec<f64> = pre[GATE_O].iter().map(|&z| sigmoid(z)).collect();
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        c[j] = f[j] * state.c[j] + i[j] * g[j];
    }
    let tanh_c: Vec<f64> = c.iter().map(|&z| z.tanh()).collect();
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        h[j] = o[j] * tanh_c[j];
    }
    CellCache {
        x: x.to_vec(),
        gates: [g, i, f, o],
        c_prev: state.c.clone(),
        c,
        tanh_c,
        h,
    }
}

/// One LSTM cell update, validating shapes and finiteness.
pub fn lstm_cell_forward(x: &[f64], state: &LstmState, layer: &LayerParams) -> Result<LstmState> {
    if x.len() != layer.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} entries, layer expects {}",
            x.len(),
            layer.input_dim()
        )));
    }
    let hidden = layer.hidden_dim();
    if state.h.len() != hidden || state.c.len() != hidden {
        return Err(Error::Shape(format!(
            "state dims ({}, {}) do not match hidden size {}",
            state.h.len(),
            state.c.len(),
            hidden
        )));
    }
    if x.iter()
        .chain(&state.h)
        .chain(&state.c)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric("non-finite input to LSTM cell".into()));
    }
    let cache = cell_step(x, state, layer);
    Ok(LstmState {
        h: cache.h,
        c: cache.c,
    })
}

/// Forward pass over a whole window. Returns the forecast vector and the
/// per-layer, per-timestep caches; `inputs` rows feed layer 0 in order.
pub fn forward_sequence(params: &LstmParams, inputs: &Mat) -> (Vec<f64>, Vec<Vec<CellCache>>) {
    let steps = inputs.rows();
    let n_layers = params.layers.len();
    let hidden = params.hidden_dim();
    let mut caches: Vec<Vec<CellCache>> = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        caches.push(Vec::with_capacity(steps));
    }
    let mut states: Vec<LstmState> = (0..n_layers).map(|_| LstmState::zeros(hidden)).collect();
    for t in 0..steps {
        let mut x: Vec<f64> = inputs.row(t).to_vec();
        for (l, layer) in params.layers.iter().enumerate() {
            let cache = cell_step(&x, &states[l], layer);
            states[l] = LstmState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };
            x = cache.h.clone();
            caches[l].push(cache);
        }
    }
    let top_h = &states[n_layers - 1].h;
    let mut y = params.dense_b.clone();
    vec_mat_accum(top_h, &params.dense_w, &mut y);
    (y, caches)
}

/// Backpropagation through time. `d_y` is the loss gradient at the dense
/// output; gradients accumulate into `grads` (same shape as the parameters).
pub fn backward_sequence(
    params: &LstmParams,
    caches: &[Vec<CellCache>],
    d_y: &[f64],
    grads: &mut LstmParams,
) {
    let n_layers = params.layers.len();
    let steps = caches[0].len();
    let hidden = params.hidden_dim();

    // Dense head.
    let top_h = &caches[n_layers - 1][steps - 1].h;
    outer_accum(top_h, d_y, &mut grads.dense_w);
    for (gb, dy) in grads.dense_b.iter_mut().zip(d_y) {
        *gb += dy;
    }

    // External dh arriving at each layer/timestep from above. The top layer
    // only receives the dense gradient at the final step.
    let mut d_h_ext: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; hidden]; steps]; n_layers];
    mat_vec_t_accum(d_y, &params.dense_w, &mut d_h_ext[n_layers - 1][steps - 1]);

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let in_dim = layer.input_dim();
        let mut d_h_carry = vec![0.0; hidden];
        let mut d_c_carry = vec![0.0; hidden];
        for t in (0..steps).rev() {
            let cache = &caches[l][t];
            let [ref g, ref i, ref f, ref o] = cache.gates;

            let mut d_h = std::mem::take(&mut d_h_ext[l][t]);
            for (dh, carry) in d_h.iter_mut().zip(&d_h_carry) {
                *dh += carry;
            }

            let mut d_pre = [
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
            ];
            let mut d_c_prev = vec![0.0; hidden];
            for j in 0..hidden {
                let d_c = d_c_carry[j] + d_h[j] * o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
                let d_o = d_h[j] * cache.tanh_c[j];
                let d_g = d_c * i[j];
                let d_i = d_c * g[j];
                let d_f = d_c * cache.c_prev[j];
                d_pre[GATE_G][j] = d_g * (1.0 - g[j] * g[j]);
                d_pre[GATE_I][j] = d_i * i[j] * (1.0 - i[j]);
                d_pre[GATE_F][j] = d_f * f[j] * (1.0 - f[j]);
                d_pre[GATE_O][j] = d_o * o[j] * (1.0 - o[j]);
                d_c_prev[j] = d_c * f[j];
            }

            let h_prev_zeros = vec![0.0; hidden];
            let h_prev = if t > 0 {
                &caches[l][t - 1].h
            } else {
                &h_prev_zeros
            };

            let mut d_x = vec![0.0; in_dim];
            let mut d_h_prev = vec![0.0; hidden];
            for gate in 0..GATES {
                outer_accum(&cache.x, &d_pre[gate], &mut grads.layers[l].w_x[gate]);
                outer_accum(h_prev, &d_pre[gate], &mut grads.layers[l].w_h[gate]);
                for (gb, dp) in grads.layers[l].b[gate].iter_mut().zip(&d_pre[gate]) {
                    *gb += dp;
                }
                mat_vec_t_accum(&d_pre[gate], &layer.w_x[gate], &mut d_x);
                mat_vec_t_accum(&d_pre[gate], &layer.w_h[gate], &mut d_h_prev);
            }

            if l > 0 {
                for (dst, dx) in d_h_ext[l - 1][t].iter_mut().zip(&d_x) {
                    *dst += dx;
                }
            }
            d_h_carry = d_h_prev;
            d_c_carry = d_c_prev;
        }
    }
}
