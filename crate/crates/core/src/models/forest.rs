use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow_classification, TreeParams};
use super::{check_xy, n_classes_of, EnsembleKind, TreeEnsemble};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` means ceil(sqrt(n_features)).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Random forest of Gini trees on bootstrap samples. Each tree gets its own
/// seed drawn from `params.seed`, so parallel and sequential fitting agree.
pub fn fit_forest(x: &[Vec<f64>], y: &[usize], params: &ForestParams) -> Result<TreeEnsemble> {
    let m = check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    let n_classes = n_classes_of(y).max(2);
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
        .clamp(1, m);

    let mut seeder = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| seeder.random()).collect();
    let n = x.len();

    let trees = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree_params = TreeParams {
                max_depth: params.max_depth,
                min_samples_leaf: params.min_samples_leaf,
                features_per_split: Some(features_per_split),
                seed: rng.random(),
            };
            tree_params.validate()?;
            Ok(grow_classification(x, y, n_classes, samples, &tree_params))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TreeEnsemble {
        kind: EnsembleKind::Forest,
        n_classes,
        n_features: m,
        base_score: vec![0.0; n_classes],
        trees,
    })
}
