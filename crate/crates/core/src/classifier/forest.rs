//! Bagged CART forest: bootstrap samples, Gini splits over a random feature
//! subset per node, majority vote with ties toward hold.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_class_tree, majority_class, ClassNode, N_CLASSES};
use crate::error::{Error, Result};
use crate::mat::Mat;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_split: usize,
    /// `None` grows trees without a depth cap.
    pub max_depth: Option<usize>,
    /// Candidate features per split; `None` takes ceil(sqrt(n_features)).
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> ForestConfig {
        ForestConfig {
            n_trees: 100,
            min_samples_split: 2,
            max_depth: None,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<ClassNode>,
    pub config: ForestConfig,
}

fn sample_feature_subset(n_features: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n_features {
        return (0..n_features).collect();
    }
    // Partial Fisher-Yates, then sorted so split ties resolve by feature index.
    let mut pool: Vec<usize> = (0..n_features).collect();
    for i in 0..k {
        let j = rng.random_range(i..n_features);
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Lexicographic row order over features then label, so bootstrap draws are
/// invariant to how the caller happened to order the training rows.
fn canonical_order(x: &Mat, y: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&a, &b| {
        for j in 0..x.cols() {
            let cmp = x.at(a, j).total_cmp(&x.at(b, j));
            if cmp != std::cmp::Ordering::Equal {
                return cmp;
            }
        }
        y[a].cmp(&y[b])
    });
    order
}

pub fn train_forest(x: &Mat, y: &[usize], cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if cfg.n_trees == 0 {
        return Err(Error::Parameter("forest needs at least one tree".into()));
    }
    let n = x.rows();
    let n_features = x.cols();
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features);

    let canonical = canonical_order(x, y);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for b in 0..cfg.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
        let indices: Vec<usize> = (0..n).map(|_| canonical[rng.random_range(0..n)]).collect();
        let mut candidates = || sample_feature_subset(n_features, max_features, &mut rng);
        trees.push(grow_class_tree(
            x,
            y,
            &indices,
            cfg.min_samples_split,
            cfg.max_depth,
            0,
            &mut candidates,
        ));
    }
    Ok(ForestModel {
        trees,
        config: cfg.clone(),
    })
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut votes = [0usize; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict_class(row)] += 1;
        }
        majority_class(&votes)
    }

    /// Indented text dump of every tree, for inspection.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for (i, tree) in self.trees.iter().enumerate() {
            out.push_str(&format!("tree {i}:\n"));
            tree.dump_text(&mut out, 1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobby(n_per: usize, spread: f64, seed: u64) -> (Mat, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(-4.0, 0.0), (0.0, 4.0), (4.0, 0.0)];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (class, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..n_per {
                let dx: f64 = rng.sample(rand_distr::StandardNormal);
                let dy: f64 = rng.sample(rand_distr::StandardNormal);
                rows.push(vec![cx + spread * dx, cy + spread * dy]);
                y.push(class);
            }
        }
        (Mat::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn fully_grown_forest_interpolates() {
        let (x, y) = blobby(40, 1.5, 3);
        let model = train_forest(&x, &y, &ForestConfig::default(), 7).unwrap();
        let correct = (0..x.rows())
            .filter(|&i| model.predict_row(x.row(i)) == y[i])
            .count();
        assert_eq!(correct, x.rows(), "training accuracy must be 1.0");
    }

    #[test]
    fn row_permutation_does_not_change_predictions() {
        let (x, y) = blobby(25, 1.0, 5);
        let model_a = train_forest(&x, &y, &ForestConfig::default(), 11).unwrap();

        // Reverse the rows and retrain with the same seed.
        let n = x.rows();
        let rows_rev: Vec<Vec<f64>> = (0..n).rev().map(|i| x.row(i).to_vec()).collect();
        let y_rev: Vec<usize> = (0..n).rev().map(|i| y[i]).collect();
        let x_rev = Mat::from_rows(&rows_rev).unwrap();
        let model_b = train_forest(&x_rev, &y_rev, &ForestConfig::default(), 11).unwrap();

        for i in 0..n {
            assert_eq!(model_a.predict_row(x.row(i)), model_b.predict_row(x.row(i)));
        }
    }

    #[test]
    fn accuracy_non_decreasing_in_tree_count_on_average() {
        // Statistical property: averaged over seeds, training accuracy with
        // more trees is at least as good as with fewer.
        let (x, y) = blobby(20, 2.5, 13);
        let acc = |n_trees: usize, seed: u64| {
            let cfg = ForestConfig {
                n_trees,
                max_depth: Some(2), // keep trees weak so averaging matters
                ..ForestConfig::default()
            };
            let model = train_forest(&x, &y, &cfg, seed).unwrap();
            (0..x.rows())
                .filter(|&i| model.predict_row(x.row(i)) == y[i])
                .count() as f64
                / x.rows() as f64
        };
        let mut few = 0.0;
        let mut many = 0.0;
        for seed in 0..10 {
            few += acc(3, seed);
            many += acc(60, seed);
        }
        assert!(
            many >= few - 1e-9,
            "mean accuracy fell from {few} to {many} with more trees"
        );
    }

    #[test]
    fn dump_text_mentions_every_tree() {
        let (x, y) = blobby(5, 0.5, 2);
        let cfg = ForestConfig {
            n_trees: 3,
            ..ForestConfig::default()
        };
        let model = train_forest(&x, &y, &cfg, 1).unwrap();
        let text = model.dump_text();
        assert!(text.contains("tree 0:") && text.contains("tree 2:"));
        assert!(text.contains("if x["));
    }
}
