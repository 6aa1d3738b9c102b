//! From-scratch classifiers: CART trees, random forests, gradient-boosted
//! trees and a one-vs-rest linear SVM.

mod cart;
mod forest;
mod gbt;
mod io;
mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cart::{fit_regression_tree, fit_tree, TreeParams};
pub use forest::{fit_forest, ForestParams};
pub use gbt::{fit_gbt, fit_gbt_traced, log_loss, GbtParams};
pub use io::{load_model, read_model, serialize_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use svm::{fit_linear_svm, SvmParams};

/// A tree node. Children are stored by index into [`Tree::nodes`] and always
/// come after their parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature_index: usize,
        /// Samples with `x[feature_index] < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        cover: f64,
        value: Vec<f64>,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Internal { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// A binary decision tree, root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(cover: f64, value: Vec<f64>) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { cover, value }],
        }
    }

    /// Leaf value reached by `x`.
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature_index] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(tree: &Tree, i: usize) -> usize {
            match tree.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + go(tree, left).max(go(tree, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Internal { feature_index, .. } if *feature_index == feature))
    }

    /// Structural checks: non-empty, children after parents, each node
    /// reachable once, feature indices and leaf widths in range.
    pub fn validate(&self, n_features: usize, n_outputs: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Schema("tree has no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            if !(node.cover().is_finite() && node.cover() >= 0.0) {
                return Err(Error::Schema(format!("node {i} has invalid cover")));
            }
            match node {
                Node::Leaf { value, .. } => {
                    if value.len() != n_outputs {
                        return Err(Error::Schema(format!(
                            "leaf {i} has {} outputs, expected {n_outputs}",
                            value.len()
                        )));
                    }
                    if value.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Schema(format!("leaf {i} has a non-finite value")));
                    }
                }
                Node::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if *feature_index >= n_features {
                        return Err(Error::Schema(format!(
                            "node {i} splits on feature {feature_index} >= {n_features}"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(Error::Schema(format!("node {i} has a NaN threshold")));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || seen[c] {
                            return Err(Error::Schema(format!("node {i} has invalid child {c}")));
                        }
                        seen[c] = true;
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!("node {orphan} is unreachable")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Leaves hold class probabilities; trees are averaged.
    Forest,
    /// Leaves hold per-class margin increments; trees are summed on top of
    /// `base_score` and passed through a softmax.
    Boosted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Average,
    SumThenSoftmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub n_classes: usize,
    pub n_features: usize,
    pub base_score: Vec<f64>,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn combiner(&self) -> Combiner {
        match self.kind {
            EnsembleKind::Forest => Combiner::Average,
            EnsembleKind::Boosted => Combiner::SumThenSoftmax,
        }
    }

    /// Scale applied to each tree's leaf values when combining.
    pub fn tree_weight(&self) -> f64 {
        match self.kind {
            EnsembleKind::Forest => 1.0 / self.trees.len() as f64,
            EnsembleKind::Boosted => 1.0,
        }
    }

    /// The additive model output: averaged probabilities for forests,
    /// pre-softmax margins for boosted ensembles.
    pub fn raw_output(&self, x: &[f64]) -> Vec<f64> {
        let w = self.tree_weight();
        let mut out = self.base_score.clone();
        for tree in &self.trees {
            for (o, v) in out.iter_mut().zip(tree.predict(x)) {
                *o += w * v;
            }
        }
        out
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let raw = self.raw_output(x);
        match self.kind {
            EnsembleKind::Forest => raw,
            EnsembleKind::Boosted => softmax(&raw),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Schema("ensemble has no trees".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Schema("ensemble needs at least 2 classes".into()));
        }
        if self.base_score.len() != self.n_classes {
            return Err(Error::Schema(
                "base_score length differs from n_classes".into(),
            ));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(self.n_features, self.n_classes)
                .map_err(|e| Error::Schema(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }
}

/// Standardized linear one-vs-rest classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub n_classes: usize,
    /// Per-class weights over standardized features.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub feature_mean: Vec<f64>,
    /// Zero marks a constant feature, which is standardized to 0.
    pub feature_std: Vec<f64>,
}

impl LinearModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect()
    }

    /// Softmax of the one-vs-rest margins. This is a ranking score, not a
    /// calibrated probability.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.margins(x))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.feature_mean.len();
        if self.n_classes < 2
            || self.weights.len() != self.n_classes
            || self.biases.len() != self.n_classes
            || self.feature_std.len() != m
            || self.weights.iter().any(|w| w.len() != m)
        {
            return Err(Error::Schema("inconsistent linear model dimensions".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Ensemble(TreeEnsemble),
    Linear(LinearModel),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Ensemble(e) => e.n_features,
            Model::Linear(l) => l.feature_mean.len(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Model::Ensemble(e) => e.n_classes,
            Model::Linear(l) => l.n_classes,
        }
    }

    pub fn as_ensemble(&self) -> Option<&TreeEnsemble> {
        match self {
            Model::Ensemble(e) => Some(e),
            Model::Linear(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Ensemble(e) => e.validate(),
            Model::Linear(l) => l.validate(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        Ok(match self {
            Model::Ensemble(e) => e.predict_proba(x),
            Model::Linear(l) => l.predict_proba(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let m = x[0].len();
    if m == 0 {
        return Err(Error::invalid("training data has no features"));
    }
    if let Some(i) = x.iter().position(|row| row.len() != m) {
        return Err(Error::invalid(format!(
            "row {i} has {} features, expected {m}",
            x[i].len()
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(m)
}

pub(crate) fn n_classes_of(y: &[usize]) -> usize {
    y.iter().copied().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forest_of(leaves: &[&[f64]]) -> TreeEnsemble {
        TreeEnsemble {
            kind: EnsembleKind::Forest,
            n_classes: 3,
            n_features: 1,
            base_score: vec![0.0; 3],
            trees: leaves
                .iter()
                .map(|v| Tree::leaf(10.0, v.to_vec()))
                .collect(),
        }
    }

    #[test]
    fn single_leaf_forest_returns_leaf() {
        let f = forest_of(&[&[0.2, 0.3, 0.5]]);
        assert_eq!(f.predict_proba(&[0.0]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn forest_averages_trees() {
        let f = forest_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(f.predict_proba(&[0.0]), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn softmax_of_zero_margins_is_uniform() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = Model::Ensemble(forest_of(&[&[1.0, 0.0, 0.0]]));
        assert!(matches!(
            m.predict_proba(&[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn validate_catches_bad_children() {
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 1,
                    cover: 2.0,
                },
                Node::Leaf {
                    cover: 1.0,
                    value: vec![1.0, 0.0],
                },
            ],
        };
        assert!(tree.validate(1, 2).is_err());
    }
}
