//! One-vs-rest linear SVM trained with Pegasos stochastic subgradient
//! descent on standardized features. The bias is learned as the weight of a
//! constant input.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, n_classes_of, LinearModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 50,
            seed: 0,
        }
    }
}

pub fn fit_linear_svm(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<LinearModel> {
    let m = check_xy(x, y)?;
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(Error::invalid("lambda must be > 0"));
    }
    if params.epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    let first = y[0];
    if y.iter().all(|&label| label == first) {
        return Err(Error::invalid(
            "linear SVM needs at least two classes in the training data",
        ));
    }
    let k = n_classes_of(y).max(2);
    let n = x.len();

    let mut mean = vec![0.0; m];
    for row in x {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut std = vec![0.0; m];
    for row in x {
        for j in 0..m {
            std[j] += (row[j] - mean[j]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 0.0;
        }
    }

    let mut model = LinearModel {
        n_classes: k,
        weights: Vec::with_capacity(k),
        biases: Vec::with_capacity(k),
        feature_mean: mean,
        feature_std: std,
    };
    // Standardized rows with a trailing constant input for the bias.
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            let mut r = model.standardize(row);
            r.push(1.0);
            r
        })
        .collect();

    let mut seeder = ChaCha8Rng::seed_from_u64(params.seed);
    let radius = 1.0 / params.lambda.sqrt();
    for class in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seeder.random());
        let mut w = vec![0.0; m + 1];
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (params.lambda * t as f64);
                let target = if y[i] == class { 1.0 } else { -1.0 };
                let margin = target * dot(&w, &z[i]);
                let shrink = 1.0 - eta * params.lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, zj) in w.iter_mut().zip(&z[i]) {
                        *wj += eta * target * zj;
                    }
                }
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        let bias = w.pop().expect("bias slot");
        model.weights.push(w);
        model.biases.push(bias);
    }
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
