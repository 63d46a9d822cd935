//! Multi-feature stacked LSTM forecaster (30 rows in, 7 closes out) trained
//! by backpropagation through time, plus a differenced autoregressive
//! baseline.

mod ar;
mod lstm;

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::marketdata::WindowSample;
use crate::mat::Mat;
use crate::seed;

pub use ar::{fit_ar_baseline, ArModel};
pub use lstm::{
    backward_sequence, forward_sequence, lstm_cell_forward, CellCache, LayerParams, LstmParams,
    LstmState,
};

const MODEL_KIND: &str = "lstm-forecaster";
const MODEL_VERSION: u32 = 1;

/// Input feature selector for the forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Close,
    Momentum,
    Volatility,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Close => "close",
            FeatureKind::Momentum => "momentum",
            FeatureKind::Volatility => "volatility",
        }
    }
}

/// Gradient update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adaptive per-parameter moment estimates (beta1 0.9, beta2 0.999).
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

/// Forecaster training configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub seed: u64,
    pub features: Vec<FeatureKind>,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            layers: 3,
            hidden: 32,
            epochs: 25,
            learning_rate: 1e-3,
            batch: 16,
            seed: 0,
            features: vec![
                FeatureKind::Close,
                FeatureKind::Momentum,
                FeatureKind::Volatility,
            ],
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Parameter("at least one LSTM layer required".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Parameter("hidden size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Parameter("at least one epoch required".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        if self.batch < 1 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Parameter(
                "at least one input feature required".into(),
            ));
        }
        Ok(())
    }
}

/// Z-score statistics fitted on the training windows only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalization {
    fn fit(samples: &[WindowSample]) -> Normalization {
        let n_features = samples[0].inputs.cols();
        let mut sums = vec![0.0; n_features];
        let mut count = 0usize;
        for s in samples {
            for r in 0..s.inputs.rows() {
                for (j, sum) in sums.iter_mut().enumerate() {
                    *sum += s.inputs.at(r, j);
                }
            }
            count += s.inputs.rows();
        }
        let feature_mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; n_features];
        for s in samples {
            for r in 0..s.inputs.rows() {
                for (j, acc) in sq.iter_mut().enumerate() {
                    let d = s.inputs.at(r, j) - feature_mean[j];
                    *acc += d * d;
                }
            }
        }
        let feature_std: Vec<f64> = sq
            .iter()
            .map(|v| {
                let std = (v / count as f64).sqrt();
                if std < 1e-12 {
                    1.0
                } else {
                    std
                }
            })
            .collect();

        let mut t_sum = 0.0;
        let mut t_count = 0usize;
        for s in samples {
            t_sum += s.targets.iter().sum::<f64>();
            t_count += s.targets.len();
        }
        let target_mean = t_sum / t_count as f64;
        let mut t_sq = 0.0;
        for s in samples {
            for &t in &s.targets {
                t_sq += (t - target_mean) * (t - target_mean);
            }
        }
        let target_std = {
            let std = (t_sq / t_count as f64).sqrt();
            if std < 1e-12 {
                1.0
            } else {
                std
            }
        };
        Normalization {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        }
    }

    pub fn normalize_inputs(&self, inputs: &Mat) -> Mat {
        let mut out = inputs.clone();
        for r in 0..out.rows() {
            for j in 0..out.cols() {
                *out.at_mut(r, j) = (inputs.at(r, j) - self.feature_mean[j]) / self.feature_std[j];
            }
        }
        out
    }

    pub fn normalize_target(&self, t: f64) -> f64 {
        (t - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }
}

/// A trained forecaster: stacked LSTM parameters, dense head, normalization
/// statistics, and the per-epoch training loss curve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LstmModel {
    pub config: TrainConfig,
    pub params: LstmParams,
    pub norm: Normalization,
    pub input_len: usize,
    pub horizon: usize,
    pub loss_curve: Vec<f64>,
}

impl LstmModel {
    /// Forecasts the horizon for one window; the window must have the
    /// trained input length and feature count.
    pub fn forecast(&self, window: &WindowSample) -> Result<Vec<f64>> {
        self.forecast_matrix(&window.inputs)
    }

    /// Forecasts from a raw `[input_len x n_features]` block.
    pub fn forecast_matrix(&self, inputs: &Mat) -> Result<Vec<f64>> {
        if inputs.rows() != self.input_len {
            return Err(Error::Shape(format!(
                "window has {} rows, model expects {}",
                inputs.rows(),
                self.input_len
            )));
        }
        if inputs.cols() != self.params.input_dim() {
            return Err(Error::Shape(format!(
                "window has {} features, model expects {}",
                inputs.cols(),
                self.params.input_dim()
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::Numeric("non-finite forecast input".into()));
        }
        let normalized = self.norm.normalize_inputs(inputs);
        let (y, _) = forward_sequence(&self.params, &normalized);
        Ok(y.iter().map(|&z| self.norm.denormalize_target(z)).collect())
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        container::write_model(w, MODEL_KIND, MODEL_VERSION, self)
    }

    pub fn load<R: Read>(r: R) -> Result<LstmModel> {
        container::read_model(r, MODEL_KIND, MODEL_VERSION)
    }

    /// Loss curve as `epoch,loss` CSV for plotting.
    pub fn write_loss_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss")?;
        for (i, loss) in self.loss_curve.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, loss)?;
        }
        Ok(())
    }
}

/// Mean-squared error of the forecast head against normalized targets, for
/// one sample.
pub fn sample_loss(params: &LstmParams, inputs: &Mat, targets: &[f64]) -> f64 {
    let (y, _) = forward_sequence(params, inputs);
    y.iter()
        .zip(targets)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / targets.len() as f64
}

/// Analytic gradients of [`sample_loss`] with respect to every parameter.
pub fn sample_grads(params: &LstmParams, inputs: &Mat, targets: &[f64]) -> LstmParams {
    let (y, caches) = forward_sequence(params, inputs);
    let d_y: Vec<f64> = y
        .iter()
        .zip(targets)
        .map(|(a, b)| 2.0 * (a - b) / targets.len() as f64)
        .collect();
    let mut grads = LstmParams::zeros_like(params);
    backward_sequence(params, &caches, &d_y, &mut grads);
    grads
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

/// Trains the stacked LSTM on supervised windows by BPTT over the MSE of
/// the normalized 7-step targets. Deterministic for a fixed config and seed.
pub fn train_forecaster(samples: &[WindowSample], cfg: &TrainConfig) -> Result<LstmModel> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("no training windows".into()));
    }
    let input_len = samples[0].inputs.rows();
    let n_features = samples[0].inputs.cols();
    let horizon = samples[0].targets.len();
    for (i, s) in samples.iter().enumerate() {
        if s.inputs.rows() != input_len || s.inputs.cols() != n_features {
            return Err(Error::Shape(format!(
                "window {} has shape {}x{}, expected {}x{}",
                i,
                s.inputs.rows(),
                s.inputs.cols(),
                input_len,
                n_features
            )));
        }
        if s.targets.len() != horizon {
            return Err(Error::Shape(format!(
                "window {} has {} targets, expected {}",
                i,
                s.targets.len(),
                horizon
            )));
        }
        if !s.inputs.is_finite() || s.targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("non-finite data in window {i}")));
        }
    }

    let norm = Normalization::fit(samples);
    let prepared: Vec<(Mat, Vec<f64>)> = samples
        .iter()
        .map(|s| {
            (
                norm.normalize_inputs(&s.inputs),
                s.targets
                    .iter()
                    .map(|&t| norm.normalize_target(t))
                    .collect(),
            )
        })
        .collect();

    let mut rng = seed::rng(cfg.seed, &["forecaster", "init"]);
    let mut params = LstmParams::init(n_features, cfg.hidden, cfg.layers, horizon, &mut rng);
    let mut shuffle_rng = seed::rng(cfg.seed, &["forecaster", "shuffle"]);

    let mut adam = AdamState {
        m: params
            .buffers()
            .iter()
            .map(|b| vec![0.0; b.len()])
            .collect(),
        v: params
            .buffers()
            .iter()
            .map(|b| vec![0.0; b.len()])
            .collect(),
        t: 0,
    };
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = LstmParams::zeros_like(&params);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (inputs, targets) = &prepared[idx];
                let (y, caches) = forward_sequence(&params, inputs);
                let loss = y
                    .iter()
                    .zip(targets)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / horizon as f64;
                batch_loss += loss;
                let d_y: Vec<f64> = y
                    .iter()
                    .zip(targets)
                    .map(|(a, b)| 2.0 * (a - b) / (horizon as f64 * chunk.len() as f64))
                    .collect();
                backward_sequence(&params, &caches, &d_y, &mut grads);
            }
            epoch_loss += batch_loss;

            match cfg.optimizer {
                Optimizer::Adam => {
                    adam.t += 1;
                    let bias1 = 1.0 - BETA1.powi(adam.t as i32);
                    let bias2 = 1.0 - BETA2.powi(adam.t as i32);
                    for (buf_idx, (param_buf, grad_buf)) in params
                        .buffers_mut()
                        .into_iter()
                        .zip(grads.buffers())
                        .enumerate()
                    {
                        let m = &mut adam.m[buf_idx];
                        let v = &mut adam.v[buf_idx];
                        for k in 0..param_buf.len() {
                            let g = grad_buf[k];
                            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                            let m_hat = m[k] / bias1;
                            let v_hat = v[k] / bias2;
                            param_buf[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                        }
                    }
                }
                Optimizer::Sgd => {
                    for (param_buf, grad_buf) in
                        params.buffers_mut().into_iter().zip(grads.buffers())
                    {
                        for k in 0..param_buf.len() {
                            param_buf[k] -= cfg.learning_rate * grad_buf[k];
                        }
                    }
                }
            }
        }
        let mean_loss = epoch_loss / prepared.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training {
                epoch: epoch + 1,
                message: "loss became non-finite".into(),
            });
        }
        loss_curve.push(mean_loss);
    }

    Ok(LstmModel {
        config: cfg.clone(),
        params,
        norm,
        input_len,
        horizon,
        loss_curve,
    })
}
