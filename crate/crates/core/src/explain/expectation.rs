//! Path-dependent conditional expectations and the exhaustive Shapley oracle.

use super::Explanation;
use crate::error::{Error, Result};
use crate::models::{Node, Tree, TreeEnsemble};

/// Largest feature count [`brute_force_shap`] will enumerate.
pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;

/// E[f(x) | x_S] for one tree: at splits on features in `known` the path
/// follows `x`, elsewhere the children are averaged by cover fraction.
pub fn conditional_expectation(tree: &Tree, x: &[f64], known: &[bool]) -> Result<Vec<f64>> {
    expectation_at(tree, 0, x, known)
}

fn expectation_at(tree: &Tree, i: usize, x: &[f64], known: &[bool]) -> Result<Vec<f64>> {
    match &tree.nodes[i] {
        Node::Leaf { value, .. } => Ok(value.clone()),
        Node::Internal {
            feature_index,
            threshold,
            left,
            right,
            cover,
        } => {
            if known[*feature_index] {
                let next = if x[*feature_index] < *threshold {
                    *left
                } else {
                    *right
                };
                return expectation_at(tree, next, x, known);
            }
            if cover.is_nan() || *cover <= 0.0 {
                return Err(Error::Numeric(format!("internal node {i} has zero cover")));
            }
            let wl = tree.nodes[*left].cover() / cover;
            let wr = tree.nodes[*right].cover() / cover;
            let l = expectation_at(tree, *left, x, known)?;
            let r = expectation_at(tree, *right, x, known)?;
            Ok(l.iter().zip(&r).map(|(a, b)| wl * a + wr * b).collect())
        }
    }
}

/// f_x(S) for the whole ensemble, in the ensemble's additive output space.
pub fn ensemble_expectation(
    ensemble: &TreeEnsemble,
    x: &[f64],
    known: &[bool],
) -> Result<Vec<f64>> {
    let w = ensemble.tree_weight();
    let mut out = ensemble.base_score.clone();
    for tree in &ensemble.trees {
        for (o, v) in out.iter_mut().zip(conditional_expectation(tree, x, known)?) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Exact Shapley values by enumerating every coalition:
/// φ_i = Σ_{S ⊆ F∖{i}} |S|! (M − |S| − 1)! / M! · [f_x(S ∪ {i}) − f_x(S)].
pub fn brute_force_shap(
    ensemble: &TreeEnsemble,
    x: &[f64],
    class_index: usize,
) -> Result<Explanation> {
    let m = ensemble.n_features;
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(Error::Feasibility(format!(
            "exhaustive Shapley enumeration over {m} features exceeds the limit of {MAX_BRUTE_FORCE_FEATURES}"
        )));
    }
    super::check_instance(ensemble, x, class_index)?;

    let n_subsets = 1usize << m;
    let mut value = Vec::with_capacity(n_subsets);
    let mut known = vec![false; m];
    for mask in 0..n_subsets {
        for (j, k) in known.iter_mut().enumerate() {
            *k = mask & (1 << j) != 0;
        }
        value.push(ensemble_expectation(ensemble, x, &known)?[class_index]);
    }

    // weight[s] = s! (m - s - 1)! / m!
    let weight: Vec<f64> = (0..m)
        .map(|s| 1.0 / (m as f64 * binomial(m - 1, s)))
        .collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1 << i;
        for mask in (0..n_subsets).filter(|s| s & bit == 0) {
            let s = mask.count_ones() as usize;
            *p += weight[s] * (value[mask | bit] - value[mask]);
        }
    }

    Ok(Explanation::new(
        class_index,
        value[0],
        phi,
        value[n_subsets - 1],
        x.to_vec(),
    ))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}
