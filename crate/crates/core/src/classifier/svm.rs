//! One-vs-rest linear SVM trained by regularized hinge-loss subgradient
//! descent (Pegasos-style step sizes) with iterate averaging. The bias term
//! is unregularized.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::N_CLASSES;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub regularization: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> SvmConfig {
        SvmConfig {
            regularization: 1e-2,
            epochs: 200,
        }
    }
}

/// One averaged weight vector and bias per class.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub config: SvmConfig,
    /// Hinge objective of the averaged iterate after each epoch, summed over
    /// the one-vs-rest subproblems.
    pub objective_curve: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized hinge objective for one binary subproblem.
fn binary_objective(x: &Mat, targets: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let hinge: f64 = (0..x.rows())
        .map(|i| (1.0 - targets[i] * (dot(x.row(i), w) + b)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / n
}

pub fn train_svm(x: &Mat, y: &[usize], cfg: &SvmConfig, seed_value: u64) -> Result<SvmModel> {
    if cfg.epochs == 0 {
        return Err(Error::Parameter("svm needs at least one epoch".into()));
    }
    if !(cfg.regularization > 0.0) {
        return Err(Error::Parameter(
            "svm regularization must be positive".into(),
        ));
    }
    let n = x.rows();
    let d = x.cols();
    let lambda = cfg.regularization;

    // +1 / -1 targets per one-vs-rest subproblem.
    let targets: Vec<Vec<f64>> = (0..N_CLASSES)
        .map(|c| {
            y.iter()
                .map(|&yi| if yi == c { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let mut w = vec![vec![0.0; d]; N_CLASSES];
    let mut b = [0.0; N_CLASSES];
    let mut w_sum = vec![vec![0.0; d]; N_CLASSES];
    let mut b_sum = [0.0; N_CLASSES];
    let mut steps = 0usize;

    let mut rng = seed::rng(seed_value, &["svm", "shuffle"]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut objective_curve = Vec::with_capacity(cfg.epochs);

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            steps += 1;
            let eta = 1.0 / (lambda * steps as f64);
            let row = x.row(i);
            for c in 0..N_CLASSES {
                let t = targets[c][i];
                let margin = t * (dot(row, &w[c]) + b[c]);
                let shrink = 1.0 - eta * lambda;
                for wj in w[c].iter_mut() {
                    *wj *= shrink;
                }
                if margin < 1.0 {
                    for (wj, xj) in w[c].iter_mut().zip(row) {
                        *wj += eta * t * xj;
                    }
                    b[c] += eta * t;
                }
                for (s, wj) in w_sum[c].iter_mut().zip(&w[c]) {
                    *s += wj;
                }
                b_sum[c] += b[c];
            }
        }
        let averaged: Vec<Vec<f64>> = w_sum
            .iter()
            .map(|ws| ws.iter().map(|s| s / steps as f64).collect())
            .collect();
        let avg_b: Vec<f64> = b_sum.iter().map(|s| s / steps as f64).collect();
        let objective: f64 = (0..N_CLASSES)
            .map(|c| binary_objective(x, &targets[c], &averaged[c], avg_b[c], lambda))
            .sum();
        objective_curve.push(objective);
    }

    let weights: Vec<Vec<f64>> = w_sum
        .iter()
        .map(|ws| ws.iter().map(|s| s / steps as f64).collect())
        .collect();
    let biases: Vec<f64> = b_sum.iter().map(|s| s / steps as f64).collect();

    Ok(SvmModel {
        weights,
        biases,
        config: cfg.clone(),
        objective_curve,
    })
}

impl SvmModel {
    /// Argmax of the per-class scores; exact ties prefer hold, then the
    /// smaller label.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let scores: Vec<f64> = (0..N_CLASSES)
            .map(|c| dot(row, &self.weights[c]) + self.biases[c])
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if scores[1] == max {
            return 1;
        }
        scores.iter().position(|&s| s == max).expect("max exists")
    }
}
