//! Polynomial-time path-dependent Tree SHAP.
//!
//! Walks every root-to-leaf path once while maintaining, for the unique
//! features seen on the path, the proportion of coalitions of each size that
//! flow to the current node. At a leaf the contribution of each path feature
//! is read off by temporarily removing ("unwinding") it from that summary.
//! Runs in O(L D²) per tree for L leaves and depth D.

use crate::error::{Error, Result};
use crate::models::{Node, Tree};

#[derive(Clone, Copy, Debug)]
struct PathElement {
    /// `None` only for the root sentinel.
    feature: Option<usize>,
    /// Fraction of cover flowing down this path when the feature is unknown.
    zero_fraction: f64,
    /// 1 if `x` follows this path when the feature is known, else 0.
    one_fraction: f64,
    weight: f64,
}

fn extend(
    path: &mut Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d = depth as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / (d + 1.0);
        path[i].weight = zero_fraction * path[i].weight * (d - i as f64) / (d + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let d = depth as f64;
    let PathElement {
        zero_fraction,
        one_fraction,
        ..
    } = path[index];
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let held = path[i].weight;
            path[i].weight = next * (d + 1.0) / ((i + 1) as f64 * one_fraction);
            next = held - path[i].weight * zero_fraction * (d - i as f64) / (d + 1.0);
        } else {
            path[i].weight = path[i].weight * (d + 1.0) / (zero_fraction * (d - i as f64));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let d = depth as f64;
    let PathElement {
        zero_fraction,
        one_fraction,
        ..
    } = path[index];
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let t = next * (d + 1.0) / ((i + 1) as f64 * one_fraction);
            total += t;
            next = path[i].weight - t * zero_fraction * (d - i as f64) / (d + 1.0);
        } else {
            total += path[i].weight * (d + 1.0) / (zero_fraction * (d - i as f64));
        }
    }
    total
}

/// Adds `scale` times the tree's Shapley values for `x` into
/// `phi[feature][output]`.
pub(crate) fn accumulate_tree_shap(
    tree: &Tree,
    x: &[f64],
    scale: f64,
    phi: &mut [Vec<f64>],
) -> Result<()> {
    for (i, node) in tree.nodes.iter().enumerate() {
        if !node.is_leaf() && (node.cover().is_nan() || node.cover() <= 0.0) {
            return Err(Error::Numeric(format!("internal node {i} has zero cover")));
        }
    }
    let mut path = Vec::with_capacity(tree.depth() + 2);
    recurse(tree, 0, x, scale, phi, &mut path, 1.0, 1.0, None);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    node: usize,
    x: &[f64],
    scale: f64,
    phi: &mut [Vec<f64>],
    path: &mut Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    let saved = path.len();
    extend(path, zero_fraction, one_fraction, feature);

    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let el = path[i];
                let w = unwound_sum(path, i) * (el.one_fraction - el.zero_fraction) * scale;
                let f = el.feature.expect("only the root lacks a feature");
                for (p, v) in phi[f].iter_mut().zip(value) {
                    *p += w * v;
                }
            }
        }
        Node::Internal {
            feature_index,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[*feature_index] < *threshold {
                (*left, *right)
            } else {
                (*right, *left)
            };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*feature_index)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(path, k);
            }
            for (child, one) in [(hot, incoming_one), (cold, 0.0)] {
                let zero = incoming_zero * tree.nodes[child].cover() / cover;
                // A branch no coalition can reach contributes nothing.
                if zero == 0.0 && one == 0.0 {
                    continue;
                }
                let mut branch = path.clone();
                recurse(
                    tree,
                    child,
                    x,
                    scale,
                    phi,
                    &mut branch,
                    zero,
                    one,
                    Some(*feature_index),
                );
            }
        }
    }
    path.truncate(saved);
}
