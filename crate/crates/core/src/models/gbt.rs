//! Multiclass gradient boosting with a softmax cross-entropy objective.
//!
//! Each round fits one squared-error regression tree per class to the
//! negative gradient `1[y = k] - p_k` and adds `learning_rate * mean residual`
//! at each leaf to that class's margin.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cart::{fit_regression_tree, TreeParams};
use super::{check_xy, n_classes_of, softmax, EnsembleKind, TreeEnsemble};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn (without replacement) for each round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid("n_rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

pub fn fit_gbt(x: &[Vec<f64>], y: &[usize], params: &GbtParams) -> Result<TreeEnsemble> {
    fit_gbt_traced(x, y, params).map(|(model, _)| model)
}

/// Like [`fit_gbt`], also returning the mean training log-loss after each
/// round (entry 0 is the loss of the base score alone).
pub fn fit_gbt_traced(
    x: &[Vec<f64>],
    y: &[usize],
    params: &GbtParams,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    let m = check_xy(x, y)?;
    params.validate()?;
    let n = x.len();
    let k = n_classes_of(y).max(2);

    let mut counts = vec![0.0; k];
    for &label in y {
        counts[label] += 1.0;
    }
    let base_score: Vec<f64> = counts
        .iter()
        .map(|c| (c / n as f64).max(1e-6).ln())
        .collect();

    let mut margins = vec![base_score.clone(); n];
    let mut losses = vec![mean_log_loss(&margins, y)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        features_per_split: None,
        seed: 0,
    };

    let mut trees = Vec::with_capacity(params.n_rounds * k);
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = margins.iter().map(|z| softmax(z)).collect();
        let samples: Vec<usize> = if params.subsample < 1.0 {
            let size = ((n as f64 * params.subsample).round() as usize).max(1);
            let mut s = index::sample(&mut rng, n, size).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let round_seed: u64 = rng.random();
        let mut round_trees = Vec::with_capacity(k);
        for class in 0..k {
            for ((r, &label), p) in residual.iter_mut().zip(y).zip(&probs) {
                *r = f64::from(u8::from(label == class)) - p[class];
            }
            let tree = fit_regression_tree(
                x,
                &residual,
                class,
                k,
                params.learning_rate,
                samples.clone(),
                &TreeParams {
                    seed: round_seed.wrapping_add(class as u64),
                    ..tree_params
                },
            )?;
            round_trees.push(tree);
        }
        for (row, z) in x.iter().zip(margins.iter_mut()) {
            for tree in &round_trees {
                for (zc, v) in z.iter_mut().zip(tree.predict(row)) {
                    *zc += v;
                }
            }
        }
        trees.extend(round_trees);
        losses.push(mean_log_loss(&margins, y));
    }

    Ok((
        TreeEnsemble {
            kind: EnsembleKind::Boosted,
            n_classes: k,
            n_features: m,
            base_score,
            trees,
        },
        losses,
    ))
}

fn mean_log_loss(margins: &[Vec<f64>], y: &[usize]) -> f64 {
    margins
        .iter()
        .zip(y)
        .map(|(z, &label)| {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[label]
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Mean multiclass log-loss of a boosted ensemble on `(x, y)`.
pub fn log_loss(model: &TreeEnsemble, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let margins: Vec<Vec<f64>> = x.iter().map(|row| model.raw_output(row)).collect();
    mean_log_loss(&margins, y)
}
