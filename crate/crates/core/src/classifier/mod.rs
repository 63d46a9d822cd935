//! Trend classifiers over the 13-feature matrix: bagged CART forest,
//! one-vs-rest linear SVM, and gradient-boosted trees.

mod forest;
mod gbt;
mod svm;
mod tree;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::labeling::Theta;
use crate::mat::Mat;

pub use forest::{train_forest, ForestConfig, ForestModel};
pub use gbt::{train_gbt, GbtConfig, GbtModel};
pub use svm::{train_svm, SvmConfig, SvmModel};
pub use tree::{grow_class_tree, majority_class, ClassNode, RegNode, N_CLASSES};

const MODEL_KIND: &str = "trend-classifier";
const MODEL_VERSION: u32 = 1;

/// Feature matrix with aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Mat,
    pub y: Vec<Theta>,
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(x: Mat, y: Vec<Theta>, feature_names: Vec<String>) -> Result<LabeledDataset> {
        if x.rows() == 0 {
            return Err(Error::Input("dataset has no rows".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::Input(format!(
                "{} labels for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::Input(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.cols()
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(LabeledDataset {
            x,
            y,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn class_indices(&self) -> Vec<usize> {
        self.y.iter().map(|t| theta_to_class(*t)).collect()
    }
}

pub(crate) fn theta_to_class(t: Theta) -> usize {
    match t {
        Theta::Down => 0,
        Theta::Flat => 1,
        Theta::Up => 2,
    }
}

pub(crate) fn class_to_theta(c: usize) -> Theta {
    match c {
        0 => Theta::Down,
        1 => Theta::Flat,
        _ => Theta::Up,
    }
}

/// Classifier family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Forest,
    Svm,
    Gbt,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::Forest,
        ClassifierKind::Svm,
        ClassifierKind::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Forest => "forest",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Gbt => "gbt",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ClassifierKind> {
        match s.to_ascii_lowercase().as_str() {
            "forest" | "random_forest" | "rf" => Ok(ClassifierKind::Forest),
            "svm" => Ok(ClassifierKind::Svm),
            "gbt" | "boosted" | "xgb" => Ok(ClassifierKind::Gbt),
            other => Err(Error::Config(format!("unknown classifier kind '{other}'"))),
        }
    }
}

/// Per-family hyper-parameters; only the trained family's block is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub forest: ForestConfig,
    pub svm: SvmConfig,
    pub gbt: GbtConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum ModelInner {
    /// Single-class training data collapses to a constant prediction.
    Constant(Theta),
    Forest(ForestModel),
    Svm(SvmModel),
    Gbt(GbtModel),
}

/// A trained classifier with its training metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub seed: u64,
    pub config: ClassifierConfig,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub inner: ModelInner,
}

/// Trains the requested classifier family; deterministic for a fixed seed.
pub fn train_classifier(
    data: &LabeledDataset,
    kind: ClassifierKind,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    let classes = data.class_indices();
    let first = classes[0];
    let inner = if classes.iter().all(|&c| c == first) {
        ModelInner::Constant(class_to_theta(first))
    } else {
        match kind {
            ClassifierKind::Forest => {
                ModelInner::Forest(train_forest(&data.x, &classes, &cfg.forest, seed)?)
            }
            ClassifierKind::Svm => ModelInner::Svm(train_svm(&data.x, &classes, &cfg.svm, seed)?),
            ClassifierKind::Gbt => ModelInner::Gbt(train_gbt(&data.x, &classes, &cfg.gbt)?),
        }
    };
    Ok(ClassifierModel {
        kind,
        seed,
        config: cfg.clone(),
        n_features: data.x.cols(),
        feature_names: data.feature_names.clone(),
        inner,
    })
}

/// Predicts one trend label per row. The column count must match training.
pub fn predict_labels(model: &ClassifierModel, x: &Mat) -> Result<Vec<Theta>> {
    if x.cols() != model.n_features {
        return Err(Error::Shape(format!(
            "input has {} columns, model was trained on {}",
            x.cols(),
            model.n_features
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let mut out = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let theta = match &model.inner {
            ModelInner::Constant(t) => *t,
            ModelInner::Forest(f) => class_to_theta(f.predict_row(row)),
            ModelInner::Svm(s) => class_to_theta(s.predict_row(row)),
            ModelInner::Gbt(g) => class_to_theta(g.predict_row(row)),
        };
        out.push(theta);
    }
    Ok(out)
}

impl ClassifierModel {
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        container::write_model(w, MODEL_KIND, MODEL_VERSION, self)
    }

    pub fn load<R: Read>(r: R) -> Result<ClassifierModel> {
        container::read_model(r, MODEL_KIND, MODEL_VERSION)
    }

    /// Indented text dump of tree structure, if this model has trees.
    pub fn dump_text(&self) -> Option<String> {
        match &self.inner {
            ModelInner::Forest(f) => Some(f.dump_text()),
            ModelInner::Gbt(g) => {
                let mut out = String::new();
                for (s, stage) in g.stages.iter().enumerate() {
                    for (c, tree) in stage.iter().enumerate() {
                        out.push_str(&format!("stage {s} class {c}:\n"));
                        let class_tree = reg_as_text(tree, 1);
                        out.push_str(&class_tree);
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

fn reg_as_text(node: &RegNode, indent: usize) -> String {
    let pad = "  ".repeat(indent);
    match node {
        RegNode::Leaf { value } => format!("{pad}leaf {value}\n"),
        RegNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            format!(
                "{pad}if x[{feature}] < {threshold}:\n{}{pad}else:\n{}",
                reg_as_text(left, indent + 1),
                reg_as_text(right, indent + 1)
            )
        }
    }
}
