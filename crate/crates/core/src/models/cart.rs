//! Greedy CART growth for Gini classification trees and squared-error
//! regression trees.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, n_classes_of, Node, Tree};
use crate::error::{Error, Result};

/// Minimum per-sample impurity decrease for a split to be accepted.
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Number of candidate features drawn at each split; `None` uses all.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_samples_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::invalid("features_per_split must be >= 1"));
        }
        Ok(())
    }
}

/// Split criterion over a multiset of sample indices.
trait Criterion {
    type Stats: Clone;
    fn empty(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, i: usize);
    fn remove(&self, stats: &mut Self::Stats, i: usize);
    /// Impurity summed over the samples (n times the per-sample impurity).
    fn total_impurity(&self, stats: &Self::Stats, n: f64) -> f64;
    fn leaf_value(&self, stats: &Self::Stats, n: f64) -> Vec<f64>;
}

struct Gini<'a> {
    y: &'a [usize],
    n_classes: usize,
}

impl Criterion for Gini<'_> {
    type Stats = Vec<f64>;

    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.n_classes]
    }

    fn add(&self, stats: &mut Vec<f64>, i: usize) {
        stats[self.y[i]] += 1.0;
    }

    fn remove(&self, stats: &mut Vec<f64>, i: usize) {
        stats[self.y[i]] -= 1.0;
    }

    fn total_impurity(&self, counts: &Vec<f64>, n: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        n - counts.iter().map(|c| c * c).sum::<f64>() / n
    }

    fn leaf_value(&self, counts: &Vec<f64>, n: f64) -> Vec<f64> {
        counts.iter().map(|c| c / n).collect()
    }
}

struct SquaredError<'a> {
    target: &'a [f64],
    output: usize,
    n_outputs: usize,
    scale: f64,
}

impl Criterion for SquaredError<'_> {
    /// (sum, sum of squares)
    type Stats = (f64, f64);

    fn empty(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn add(&self, s: &mut (f64, f64), i: usize) {
        let t = self.target[i];
        s.0 += t;
        s.1 += t * t;
    }

    fn remove(&self, s: &mut (f64, f64), i: usize) {
        let t = self.target[i];
        s.0 -= t;
        s.1 -= t * t;
    }

    fn total_impurity(&self, s: &(f64, f64), n: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        (s.1 - s.0 * s.0 / n).max(0.0)
    }

    fn leaf_value(&self, s: &(f64, f64), n: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_outputs];
        v[self.output] = self.scale * s.0 / n;
        v
    }
}

struct Grower<'a, C: Criterion> {
    x: &'a [Vec<f64>],
    criterion: C,
    params: TreeParams,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<C: Criterion> Grower<'_, C> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let n = samples.len() as f64;
        let mut stats = self.criterion.empty();
        for &i in &samples {
            self.criterion.add(&mut stats, i);
        }
        let id = self.nodes.len();
        let impurity = self.criterion.total_impurity(&stats, n);

        let split = if depth < self.params.max_depth
            && samples.len() >= 2 * self.params.min_samples_leaf
            && impurity / n > MIN_GAIN
        {
            self.best_split(&samples, &stats, impurity)
        } else {
            None
        };

        let Some(split) = split else {
            self.nodes.push(Node::Leaf {
                cover: n,
                value: self.criterion.leaf_value(&stats, n),
            });
            return id;
        };

        // Placeholder, replaced once both children exist.
        self.nodes.push(Node::Leaf {
            cover: n,
            value: Vec::new(),
        });
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x[i][split.feature] < split.threshold);
        let left_id = self.grow(left, depth + 1);
        let right_id = self.grow(right, depth + 1);
        self.nodes[id] = Node::Internal {
            feature_index: split.feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
            cover: n,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.params.features_per_split {
            Some(k) if k < self.n_features => {
                let mut f = index::sample(&mut self.rng, self.n_features, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    /// Best split over the candidate features. Features are scanned in
    /// ascending order and thresholds ascending; a candidate only replaces
    /// the incumbent when strictly better, so ties keep the lower feature
    /// index and then the lower threshold.
    fn best_split(
        &mut self,
        samples: &[usize],
        parent: &C::Stats,
        parent_impurity: f64,
    ) -> Option<Split> {
        let n = samples.len();
        let nf = n as f64;
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);

        for feature in self.candidate_features() {
            order.clear();
            order.extend(samples.iter().map(|&i| (self.x[i][feature], i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if order[0].0 == order[n - 1].0 {
                continue;
            }

            let mut left = self.criterion.empty();
            let mut right = parent.clone();
            for k in 0..n - 1 {
                let (value, i) = order[k];
                self.criterion.add(&mut left, i);
                self.criterion.remove(&mut right, i);
                let next = order[k + 1].0;
                let n_left = k + 1;
                if value == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let nl = n_left as f64;
                let child = self.criterion.total_impurity(&left, nl)
                    + self.criterion.total_impurity(&right, nf - nl);
                let gain = (parent_impurity - child) / nf;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain + MIN_GAIN) {
                    let mut threshold = 0.5 * (value + next);
                    if threshold <= value {
                        threshold = next;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Fits a Gini classification tree on all rows of `x`.
pub fn fit_tree(x: &[Vec<f64>], y: &[usize], params: &TreeParams) -> Result<Tree> {
    check_xy(x, y)?;
    params.validate()?;
    let n_classes = n_classes_of(y).max(2);
    Ok(grow_classification(
        x,
        y,
        n_classes,
        (0..x.len()).collect(),
        params,
    ))
}

/// Grows a classification tree on a multiset of row indices (bootstrap
/// duplicates allowed). Covers count duplicates.
pub(crate) fn grow_classification(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    samples: Vec<usize>,
    params: &TreeParams,
) -> Tree {
    let mut grower = Grower {
        x,
        criterion: Gini { y, n_classes },
        params: *params,
        n_features: x[0].len(),
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
    };
    grower.grow(samples, 0);
    Tree {
        nodes: grower.nodes,
    }
}

/// Fits a squared-error regression tree to `target`. Leaves hold
/// `scale * mean(target)` in slot `output` of an `n_outputs`-wide vector.
pub fn fit_regression_tree(
    x: &[Vec<f64>],
    target: &[f64],
    output: usize,
    n_outputs: usize,
    scale: f64,
    samples: Vec<usize>,
    params: &TreeParams,
) -> Result<Tree> {
    if samples.is_empty() || x.is_empty() {
        return Err(Error::invalid("regression tree needs at least one sample"));
    }
    if output >= n_outputs || target.len() != x.len() {
        return Err(Error::invalid("inconsistent regression tree inputs"));
    }
    params.validate()?;
    let mut grower = Grower {
        x,
        criterion: SquaredError {
            target,
            output,
            n_outputs,
            scale,
        },
        params: *params,
        n_features: x[0].len(),
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
    };
    grower.grow(samples, 0);
    Ok(Tree {
        nodes: grower.nodes,
    })
}
