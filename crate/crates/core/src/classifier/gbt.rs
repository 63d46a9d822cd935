//! Gradient-boosted trees on the multinomial log-loss: each stage fits one
//! shallow regression tree per class to the softmax residuals and takes a
//! shrunken Newton step in the leaves.

use serde::{Deserialize, Serialize};

use super::tree::{grow_reg_tree, RegNode, N_CLASSES};
use crate::error::{Error, Result};
use crate::mat::Mat;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub stages: usize,
    pub depth: usize,
    pub shrinkage: f64,
    pub min_samples_split: usize,
}

impl Default for GbtConfig {
    fn default() -> GbtConfig {
        GbtConfig {
            stages: 100,
            depth: 3,
            shrinkage: 0.1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GbtModel {
    /// `stages[s][c]` is the stage-s regression tree for class c.
    pub stages: Vec<Vec<RegNode>>,
    pub config: GbtConfig,
}

fn softmax_into(scores: &[f64; N_CLASSES], probs: &mut [f64; N_CLASSES]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for c in 0..N_CLASSES {
        probs[c] = (scores[c] - max).exp();
        sum += probs[c];
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
}

pub fn train_gbt(x: &Mat, y: &[usize], cfg: &GbtConfig) -> Result<GbtModel> {
    if cfg.stages == 0 {
        return Err(Error::Parameter("gbt needs at least one stage".into()));
    }
    if cfg.depth == 0 {
        return Err(Error::Parameter("gbt tree depth must be at least 1".into()));
    }
    if !(cfg.shrinkage > 0.0) {
        return Err(Error::Parameter("gbt shrinkage must be positive".into()));
    }
    let n = x.rows();
    let indices: Vec<usize> = (0..n).collect();
    let mut scores: Vec<[f64; N_CLASSES]> = vec![[0.0; N_CLASSES]; n];
    let mut stages = Vec::with_capacity(cfg.stages);

    for _stage in 0..cfg.stages {
        let mut probs = [0.0; N_CLASSES];
        let mut residuals: Vec<Vec<f64>> = vec![vec![0.0; n]; N_CLASSES];
        for i in 0..n {
            softmax_into(&scores[i], &mut probs);
            for c in 0..N_CLASSES {
                let target = if y[i] == c { 1.0 } else { 0.0 };
                residuals[c][i] = target - probs[c];
            }
        }

        let mut stage_trees = Vec::with_capacity(N_CLASSES);
        for residual in residuals.iter() {
            // Friedman's multinomial Newton step per leaf.
            let leaf_value = |idx: &[usize]| -> f64 {
                let num: f64 = idx.iter().map(|&i| residual[i]).sum();
                let den: f64 = idx
                    .iter()
                    .map(|&i| residual[i].abs() * (1.0 - residual[i].abs()))
                    .sum();
                if den.abs() < 1e-10 {
                    0.0
                } else {
                    (N_CLASSES as f64 - 1.0) / N_CLASSES as f64 * num / den
                }
            };
            let tree = grow_reg_tree(
                x,
                residual,
                &indices,
                cfg.min_samples_split,
                cfg.depth,
                0,
                &leaf_value,
            );
            stage_trees.push(tree);
        }
        for i in 0..n {
            for (c, tree) in stage_trees.iter().enumerate() {
                scores[i][c] += cfg.shrinkage * tree.predict(x.row(i));
            }
        }
        stages.push(stage_trees);
    }

    Ok(GbtModel {
        stages,
        config: cfg.clone(),
    })
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut scores = [0.0f64; N_CLASSES];
        for stage in &self.stages {
            for (c, tree) in stage.iter().enumerate() {
                scores[c] += self.config.shrinkage * tree.predict(row);
            }
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if scores[1] == max {
            return 1;
        }
        scores.iter().position(|&s| s == max).expect("max exists")
    }
}
