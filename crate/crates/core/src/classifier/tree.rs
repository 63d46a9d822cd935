//! CART trees: Gini classification trees for the forest and squared-error
//! regression trees for boosting.
//!
//! Split search is deterministic: candidate thresholds are midpoints between
//! consecutive distinct sorted values, rows go left when strictly below the
//! threshold, and ties between equally good splits resolve to the lowest
//! feature index, then the smallest threshold. Impure nodes split even at
//! zero impurity gain as long as some threshold separates distinct feature
//! vectors, so a fully grown tree always interpolates a consistent sample.

use serde::{Deserialize, Serialize};

use crate::mat::Mat;

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum ClassNode {
    Leaf {
        counts: [usize; N_CLASSES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<ClassNode>,
        right: Box<ClassNode>,
    },
}

impl ClassNode {
    /// Class counts at the leaf this row falls into.
    pub fn leaf_counts(&self, row: &[f64]) -> &[usize; N_CLASSES] {
        match self {
            ClassNode::Leaf { counts } => counts,
            ClassNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] < *threshold {
                    left.leaf_counts(row)
                } else {
                    right.leaf_counts(row)
                }
            }
        }
    }

    /// Majority class index with ties broken toward hold (class 1), then the
    /// smaller label.
    pub fn predict_class(&self, row: &[f64]) -> usize {
        majority_class(self.leaf_counts(row))
    }

    pub fn depth(&self) -> usize {
        match self {
            ClassNode::Leaf { .. } => 0,
            ClassNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn dump_text(&self, out: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        match self {
            ClassNode::Leaf { counts } => {
                out.push_str(&format!(
                    "{pad}leaf down={} hold={} up={}\n",
                    counts[0], counts[1], counts[2]
                ));
            }
            ClassNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push_str(&format!("{pad}if x[{feature}] < {threshold}:\n"));
                left.dump_text(out, indent + 1);
                out.push_str(&format!("{pad}else:\n"));
                right.dump_text(out, indent + 1);
            }
        }
    }
}

/// Class index with most votes; hold (index 1) wins ties, then the smaller
/// label.
pub fn majority_class(counts: &[usize; N_CLASSES]) -> usize {
    let max = *counts.iter().max().expect("non-empty");
    if counts[1] == max {
        return 1;
    }
    counts.iter().position(|&c| c == max).expect("max exists")
}

fn gini(counts: &[usize; N_CLASSES], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows a Gini classification tree over the (multiset) rows in `indices`.
/// `candidate_features` picks the features examined at each node, letting
/// the forest draw a fresh random subset per split; it must return indices
/// in ascending order.
pub fn grow_class_tree(
    x: &Mat,
    y: &[usize],
    indices: &[usize],
    min_samples_split: usize,
    max_depth: Option<usize>,
    depth: usize,
    candidate_features: &mut dyn FnMut() -> Vec<usize>,
) -> ClassNode {
    let mut counts = [0usize; N_CLASSES];
    for &i in indices {
        counts[y[i]] += 1;
    }
    let total = indices.len();
    let pure = counts.contains(&total);
    let depth_capped = max_depth.is_some_and(|d| depth >= d);
    if pure || total < min_samples_split || depth_capped {
        return ClassNode::Leaf { counts };
    }

    let mut best: Option<BestSplit> = None;
    for feature in candidate_features() {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| x.at(a, feature).total_cmp(&x.at(b, feature)));
        let mut left = [0usize; N_CLASSES];
        for k in 0..total - 1 {
            left[y[order[k]]] += 1;
            let v = x.at(order[k], feature);
            let next = x.at(order[k + 1], feature);
            if v == next {
                continue;
            }
            let mut right = [0usize; N_CLASSES];
            for c in 0..N_CLASSES {
                right[c] = counts[c] - left[c];
            }
            let n_left = k + 1;
            let n_right = total - n_left;
            let score = (n_left as f64 * gini(&left, n_left)
                + n_right as f64 * gini(&right, n_right))
                / total as f64;
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(BestSplit {
                    feature,
                    threshold: (v + next) / 2.0,
                    score,
                });
            }
        }
    }

    let Some(split) = best else {
        // No threshold separates these rows; nothing more to learn.
        return ClassNode::Leaf { counts };
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| x.at(i, split.feature) < split.threshold);
    let left = grow_class_tree(
        x,
        y,
        &left_idx,
        min_samples_split,
        max_depth,
        depth + 1,
        candidate_features,
    );
    let right = grow_class_tree(
        x,
        y,
        &right_idx,
        min_samples_split,
        max_depth,
        depth + 1,
        candidate_features,
    );
    ClassNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
}

impl RegNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            RegNode::Leaf { value } => *value,
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] < *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

/// Grows a squared-error regression tree on `targets`; `leaf_value` turns a
/// leaf's row set into its output (boosting uses a Newton step rather than
/// the mean).
pub fn grow_reg_tree(
    x: &Mat,
    targets: &[f64],
    indices: &[usize],
    min_samples_split: usize,
    max_depth: usize,
    depth: usize,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> RegNode {
    let total = indices.len();
    let constant = indices.windows(2).all(|w| targets[w[0]] == targets[w[1]]);
    if total < min_samples_split || depth >= max_depth || constant {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    }

    let sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let mut best: Option<BestSplit> = None;
    for feature in 0..x.cols() {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| x.at(a, feature).total_cmp(&x.at(b, feature)));
        let mut left_sum = 0.0;
        for k in 0..total - 1 {
            left_sum += targets[order[k]];
            let v = x.at(order[k], feature);
            let next = x.at(order[k + 1], feature);
            if v == next {
                continue;
            }
            let n_left = (k + 1) as f64;
            let n_right = (total - k - 1) as f64;
            let right_sum = sum - left_sum;
            // Minimizing SSE is maximizing sum_L^2/n_L + sum_R^2/n_R.
            let score = -(left_sum * left_sum / n_left + right_sum * right_sum / n_right);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(BestSplit {
                    feature,
                    threshold: (v + next) / 2.0,
                    score,
                });
            }
        }
    }

    let Some(split) = best else {
        return RegNode::Leaf {
            value: leaf_value(indices),
        };
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| x.at(i, split.feature) < split.threshold);
    let left = grow_reg_tree(
        x,
        targets,
        &left_idx,
        min_samples_split,
        max_depth,
        depth + 1,
        leaf_value,
    );
    let right = grow_reg_tree(
        x,
        targets,
        &right_idx,
        min_samples_split,
        max_depth,
        depth + 1,
        leaf_value,
    );
    RegNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}
