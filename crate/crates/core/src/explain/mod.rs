//! Shapley-value explanations for tree ensembles.
//!
//! Forest attributions explain the averaged class probabilities; boosted
//! attributions explain the pre-softmax class margins. In both cases the
//! attributions of one instance sum to `fx - base_value`.

mod expectation;
mod treeshap;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::models::{EnsembleKind, TreeEnsemble};

pub use expectation::{
    brute_force_shap, conditional_expectation, ensemble_expectation, MAX_BRUTE_FORCE_FEATURES,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpace {
    Probability,
    Margin,
}

impl OutputSpace {
    pub fn of(ensemble: &TreeEnsemble) -> OutputSpace {
        match ensemble.kind {
            EnsembleKind::Forest => OutputSpace::Probability,
            EnsembleKind::Boosted => OutputSpace::Margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: Option<usize>,
    pub class_index: usize,
    /// Expected output with no feature known.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Model output being explained.
    pub fx: f64,
    pub feature_values: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Explanation {
    pub fn new(
        class_index: usize,
        base_value: f64,
        phi: Vec<f64>,
        fx: f64,
        feature_values: Vec<f64>,
    ) -> Self {
        let feature_names = (0..phi.len()).map(|i| format!("x{i}")).collect();
        Explanation {
            instance_id: None,
            class_index,
            base_value,
            phi,
            fx,
            feature_values,
            feature_names,
        }
    }

    pub fn with_names(mut self, names: &[String]) -> Self {
        self.feature_names = names.to_vec();
        self
    }

    pub fn with_instance(mut self, id: usize) -> Self {
        self.instance_id = Some(id);
        self
    }

    /// `base_value + Σ φ - fx`; zero up to rounding.
    pub fn additivity_gap(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>() - self.fx
    }
}

fn check_instance(ensemble: &TreeEnsemble, x: &[f64], class_index: usize) -> Result<()> {
    if x.len() != ensemble.n_features {
        return Err(Error::invalid(format!(
            "instance has {} features, model expects {}",
            x.len(),
            ensemble.n_features
        )));
    }
    if class_index >= ensemble.n_classes {
        return Err(Error::invalid(format!(
            "class {class_index} out of range for {} classes",
            ensemble.n_classes
        )));
    }
    Ok(())
}

/// Tree SHAP attributions for every class of one instance.
pub fn tree_shap_all(ensemble: &TreeEnsemble, x: &[f64]) -> Result<Vec<Explanation>> {
    check_instance(ensemble, x, 0)?;
    let k = ensemble.n_classes;
    let m = ensemble.n_features;
    let w = ensemble.tree_weight();
    let mut phi = vec![vec![0.0; k]; m];
    for tree in &ensemble.trees {
        treeshap::accumulate_tree_shap(tree, x, w, &mut phi)?;
    }
    let base = ensemble_expectation(ensemble, x, &vec![false; m])?;
    let fx = ensemble.raw_output(x);
    Ok((0..k)
        .map(|c| {
            Explanation::new(
                c,
                base[c],
                phi.iter().map(|p| p[c]).collect(),
                fx[c],
                x.to_vec(),
            )
        })
        .collect())
}

/// Tree SHAP attributions for one class of one instance.
pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64], class_index: usize) -> Result<Explanation> {
    check_instance(ensemble, x, class_index)?;
    Ok(tree_shap_all(ensemble, x)?.swap_remove(class_index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: String,
    pub feature_value: f64,
    pub shap_value: f64,
    /// Running output after adding this step.
    pub cumulative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waterfall {
    pub instance_id: Option<usize>,
    pub class_index: usize,
    pub output: Option<OutputSpace>,
    pub base_value: f64,
    pub fx: f64,
    pub steps: Vec<WaterfallStep>,
}

/// Non-zero contributions ordered by decreasing magnitude, accumulated from
/// the base value.
pub fn waterfall(explanation: &Explanation) -> Waterfall {
    let mut order: Vec<usize> = (0..explanation.phi.len())
        .filter(|&i| explanation.phi[i] != 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        explanation.phi[b]
            .abs()
            .total_cmp(&explanation.phi[a].abs())
            .then(a.cmp(&b))
    });
    let mut running = explanation.base_value;
    let steps = order
        .into_iter()
        .map(|i| {
            running += explanation.phi[i];
            WaterfallStep {
                feature: explanation.feature_names[i].clone(),
                feature_value: explanation.feature_values[i],
                shap_value: explanation.phi[i],
                cumulative: running,
            }
        })
        .collect();
    Waterfall {
        instance_id: explanation.instance_id,
        class_index: explanation.class_index,
        output: None,
        base_value: explanation.base_value,
        fx: explanation.fx,
        steps,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRow {
    pub instance_id: usize,
    pub class: usize,
    pub feature: String,
    pub feature_value: f64,
    pub shap_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub class: usize,
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// Attributions for every instance and class of a dataset.
#[derive(Clone, Debug)]
pub struct DatasetExplanation {
    pub feature_names: Vec<String>,
    pub output: OutputSpace,
    /// `explanations[instance][class]`.
    pub explanations: Vec<Vec<Explanation>>,
}

pub fn explain_dataset(
    ensemble: &TreeEnsemble,
    data: &FeatureMatrix,
) -> Result<DatasetExplanation> {
    if data.rows.is_empty() {
        return Err(Error::invalid("no instances to explain"));
    }
    if data.n_features() != ensemble.n_features {
        return Err(Error::invalid(format!(
            "data has {} features, model expects {}",
            data.n_features(),
            ensemble.n_features
        )));
    }
    let explanations = data
        .rows
        .par_iter()
        .enumerate()
        .map(|(id, row)| {
            tree_shap_all(ensemble, &row.values).map(|all| {
                all.into_iter()
                    .map(|e| e.with_names(&data.names).with_instance(id))
                    .collect()
            })
        })
        .collect::<Result<Vec<Vec<Explanation>>>>()?;
    Ok(DatasetExplanation {
        feature_names: data.names.clone(),
        output: OutputSpace::of(ensemble),
        explanations,
    })
}

impl DatasetExplanation {
    pub fn n_classes(&self) -> usize {
        self.explanations.first().map_or(0, Vec::len)
    }

    /// One row per (instance, class, feature).
    pub fn beeswarm(&self) -> Vec<BeeswarmRow> {
        let mut rows = Vec::new();
        for per_class in &self.explanations {
            for e in per_class {
                for (j, name) in self.feature_names.iter().enumerate() {
                    rows.push(BeeswarmRow {
                        instance_id: e.instance_id.unwrap_or_default(),
                        class: e.class_index,
                        feature: name.clone(),
                        feature_value: e.feature_values[j],
                        shap_value: e.phi[j],
                    });
                }
            }
        }
        rows
    }

    /// Mean |φ| per class and feature, in feature order.
    pub fn importance(&self) -> Vec<ImportanceRow> {
        let n = self.explanations.len().max(1) as f64;
        let mut rows = Vec::new();
        for class in 0..self.n_classes() {
            for (j, name) in self.feature_names.iter().enumerate() {
                let total: f64 = self
                    .explanations
                    .iter()
                    .map(|e| e[class].phi[j].abs())
                    .sum();
                rows.push(ImportanceRow {
                    class,
                    feature: name.clone(),
                    mean_abs_shap: total / n,
                });
            }
        }
        rows
    }

    /// Feature names for `class` ranked by decreasing mean |φ|.
    pub fn ranked_features(&self, class: usize) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .importance()
            .into_iter()
            .filter(|r| r.class == class)
            .map(|r| (r.feature, r.mean_abs_shap))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    pub fn waterfall(&self, instance: usize, class: usize) -> Result<Waterfall> {
        let e = self
            .explanations
            .get(instance)
            .and_then(|c| c.get(class))
            .ok_or_else(|| {
                Error::NotFound(format!(
                    "no explanation for instance {instance}, class {class}"
                ))
            })?;
        let mut w = waterfall(e);
        w.output = Some(self.output);
        Ok(w)
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Columns: `instance_id,class,feature,feature_value,shap_value`.
pub fn write_beeswarm_csv(rows: &[BeeswarmRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

/// Columns: `class,feature,mean_abs_shap`.
pub fn write_importance_csv(rows: &[ImportanceRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

pub fn write_waterfall_json(waterfall: &Waterfall, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(waterfall)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_forest, fit_gbt, ForestParams, GbtParams, Node, Tree};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds a random tree of at most `depth` levels with consistent covers.
    fn random_tree(rng: &mut ChaCha8Rng, m: usize, depth: usize, k: usize) -> Tree {
        fn grow(
            rng: &mut ChaCha8Rng,
            nodes: &mut Vec<Node>,
            m: usize,
            depth: usize,
            k: usize,
        ) -> usize {
            let id = nodes.len();
            if depth == 0 || rng.random_bool(0.25) {
                let value = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                nodes.push(Node::Leaf {
                    cover: rng.random_range(1..20) as f64,
                    value,
                });
                return id;
            }
            nodes.push(Node::Leaf {
                cover: 0.0,
                value: vec![],
            });
            let feature_index = rng.random_range(0..m);
            let threshold = rng.random_range(-1.0..1.0);
            let left = grow(rng, nodes, m, depth - 1, k);
            let right = grow(rng, nodes, m, depth - 1, k);
            let cover = nodes[left].cover() + nodes[right].cover();
            nodes[id] = Node::Internal {
                feature_index,
                threshold,
                left,
                right,
                cover,
            };
            id
        }
        let mut nodes = Vec::new();
        grow(rng, &mut nodes, m, depth, k);
        Tree { nodes }
    }

    fn random_ensemble(seed: u64, m: usize, kind: EnsembleKind) -> TreeEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let n_trees = rng.random_range(1..=5);
        TreeEnsemble {
            kind,
            n_classes: k,
            n_features: m,
            base_score: match kind {
                EnsembleKind::Forest => vec![0.0; k],
                EnsembleKind::Boosted => (0..k).map(|_| rng.random_range(-1.0..0.0)).collect(),
            },
            trees: (0..n_trees)
                .map(|_| random_tree(&mut rng, m, 4, k))
                .collect(),
        }
    }

    /// f_x(S) by summing over leaves: each leaf's value weighted by the product
    /// along its path of 1/0 for known features and cover fractions otherwise.
    fn leaf_path_value(e: &TreeEnsemble, x: &[f64], known: &[bool], class: usize) -> f64 {
        let mut total = e.base_score[class];
        for tree in &e.trees {
            let mut stack = vec![(0usize, 1.0f64)];
            while let Some((i, w)) = stack.pop() {
                match &tree.nodes[i] {
                    Node::Leaf { value, .. } => total += e.tree_weight() * w * value[class],
                    Node::Internal {
                        feature_index: f,
                        threshold,
                        left,
                        right,
                        cover,
                    } => {
                        for (child, goes_left) in [(*left, true), (*right, false)] {
                            let factor = if known[*f] {
                                f64::from(u8::from((x[*f] < *threshold) == goes_left))
                            } else {
                                tree.nodes[child].cover() / cover
                            };
                            stack.push((child, w * factor));
                        }
                    }
                }
            }
        }
        total
    }

    /// Shapley values averaged over every feature ordering.
    fn permutation_shap(e: &TreeEnsemble, x: &[f64], class: usize) -> Vec<f64> {
        fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut p in permutations(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let m = e.n_features;
        let perms = permutations((0..m).collect());
        let mut phi = vec![0.0; m];
        for p in &perms {
            let mut known = vec![false; m];
            let mut prev = leaf_path_value(e, x, &known, class);
            for &i in p {
                known[i] = true;
                let next = leaf_path_value(e, x, &known, class);
                phi[i] += next - prev;
                prev = next;
            }
        }
        phi.iter().map(|v| v / perms.len() as f64).collect()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random_range(-1.2..1.2)).collect()
    }

    #[test]
    fn hand_computed_two_feature_tree() {
        // x0 < 0 ? (x1 < 0 ? 1 : 3) : 5 with covers 2/2 under 4, 4 at the right.
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 4,
                    cover: 8.0,
                },
                Node::Internal {
                    feature_index: 1,
                    threshold: 0.0,
                    left: 2,
                    right: 3,
                    cover: 4.0,
                },
                Node::Leaf {
                    cover: 2.0,
                    value: vec![1.0],
                },
                Node::Leaf {
                    cover: 2.0,
                    value: vec![3.0],
                },
                Node::Leaf {
                    cover: 4.0,
                    value: vec![5.0],
                },
            ],
        };
        let e = TreeEnsemble {
            kind: EnsembleKind::Boosted,
            n_classes: 1,
            n_features: 2,
            base_score: vec![0.0],
            trees: vec![tree],
        };
        // f(∅)=3.5, f({0})=2, f({1})=3, f({0,1})=1 at x=(-1,-1):
        // φ0 = ½(2-3.5) + ½(1-3) = -1.75, φ1 = ½(3-3.5) + ½(1-2) = -0.75.
        let ex = tree_shap(&e, &[-1.0, -1.0], 0).unwrap();
        assert!((ex.base_value - 3.5).abs() < 1e-12);
        assert!((ex.phi[0] + 1.75).abs() < 1e-12);
        assert!((ex.phi[1] + 0.75).abs() < 1e-12);
        assert!((ex.fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_feature_on_path() {
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 4,
                    cover: 10.0,
                },
                Node::Internal {
                    feature_index: 0,
                    threshold: -0.5,
                    left: 2,
                    right: 3,
                    cover: 6.0,
                },
                Node::Leaf {
                    cover: 1.0,
                    value: vec![2.0],
                },
                Node::Leaf {
                    cover: 5.0,
                    value: vec![-1.0],
                },
                Node::Internal {
                    feature_index: 1,
                    threshold: 0.0,
                    left: 5,
                    right: 6,
                    cover: 4.0,
                },
                Node::Leaf {
                    cover: 3.0,
                    value: vec![0.5],
                },
                Node::Leaf {
                    cover: 1.0,
                    value: vec![4.0],
                },
            ],
        };
        let e = TreeEnsemble {
            kind: EnsembleKind::Boosted,
            n_classes: 1,
            n_features: 2,
            base_score: vec![0.0],
            trees: vec![tree],
        };
        for x in [[-1.0, 1.0], [-0.2, -1.0], [0.5, 0.5], [0.5, -0.5]] {
            let fast = tree_shap(&e, &x, 0).unwrap();
            let oracle = permutation_shap(&e, &x, 0);
            for (a, b) in fast.phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn brute_force_matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..30 {
            let e = random_ensemble(seed, 5, EnsembleKind::Boosted);
            let x = random_point(&mut rng, 5);
            for class in 0..3 {
                let brute = brute_force_shap(&e, &x, class).unwrap();
                let oracle = permutation_shap(&e, &x, class);
                for (a, b) in brute.phi.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fitted_models_satisfy_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<Vec<f64>> = (0..120).map(|_| random_point(&mut rng, 4)).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|r| usize::from(r[0] > 0.0) + usize::from(r[1] > 0.3))
            .collect();
        let forest = fit_forest(
            &x,
            &y,
            &ForestParams {
                n_trees: 8,
                max_depth: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let gbt = fit_gbt(
            &x,
            &y,
            &GbtParams {
                n_rounds: 10,
                ..Default::default()
            },
        )
        .unwrap();
        for model in [&forest, &gbt] {
            for row in x.iter().take(20) {
                let all = tree_shap_all(model, row).unwrap();
                for (c, ex) in all.iter().enumerate() {
                    assert!(ex.additivity_gap().abs() < 1e-9);
                    let brute = brute_force_shap(model, row, c).unwrap();
                    for (a, b) in ex.phi.iter().zip(&brute.phi) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }
        // Forest attributions explain averaged probabilities.
        let ex = tree_shap_all(&forest, &x[0]).unwrap();
        let p = forest.predict_proba(&x[0]);
        for (c, e) in ex.iter().enumerate() {
            assert!((e.fx - p[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn waterfall_orders_and_accumulates() {
        let e = Explanation::new(
            0,
            1.0,
            vec![0.1, -0.5, 0.0, 0.3],
            0.9,
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .with_names(&["a".into(), "b".into(), "c".into(), "d".into()]);
        let w = waterfall(&e);
        let names: Vec<&str> = w.steps.iter().map(|s| s.feature.as_str()).collect();
        assert_eq!(names, ["b", "d", "a"]);
        assert!((w.steps[0].cumulative - 0.5).abs() < 1e-12);
        assert!((w.steps.last().unwrap().cumulative - 0.9).abs() < 1e-12);
        assert_eq!(w.steps[1].feature_value, 4.0);
    }

    #[test]
    fn dataset_tables_have_expected_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random_ensemble(3, 3, EnsembleKind::Forest);
        let names: Vec<String> = ["p", "q", "r"].iter().map(|s| s.to_string()).collect();
        let rows = (0..7)
            .map(|i| crate::features::FeatureVector {
                values: random_point(&mut rng, 3),
                label: i % 3,
                window_ref: None,
            })
            .collect();
        let data = FeatureMatrix { names, rows };
        let ex = explain_dataset(&e, &data).unwrap();
        assert_eq!(ex.beeswarm().len(), 7 * 3 * 3);
        let imp = ex.importance();
        assert_eq!(imp.len(), 9);
        assert!(imp.iter().all(|r| r.mean_abs_shap >= 0.0));
        let ranked = ex.ranked_features(1);
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bee.csv");
        write_beeswarm_csv(&ex.beeswarm(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("instance_id,class,feature,feature_value,shap_value\n"));
        let path = dir.path().join("imp.csv");
        write_importance_csv(&imp, &path).unwrap();
        assert!(std::fs::read_to_string(&path)
            .unwrap()
            .starts_with("class,feature,mean_abs_shap\n"));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let e = random_ensemble(1, 3, EnsembleKind::Forest);
        assert!(matches!(
            tree_shap(&e, &[0.0; 2], 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            tree_shap(&e, &[0.0; 3], 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tree_shap_matches_exhaustive(seed in any::<u64>(), m in 1usize..=7, boosted in any::<bool>()) {
            let kind = if boosted { EnsembleKind::Boosted } else { EnsembleKind::Forest };
            let e = random_ensemble(seed, m, kind);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let x = random_point(&mut rng, m);
            let all = tree_shap_all(&e, &x).unwrap();
            for (c, fast) in all.iter().enumerate() {
                let brute = brute_force_shap(&e, &x, c).unwrap();
                prop_assert!((fast.base_value - brute.base_value).abs() < 1e-9);
                for (a, b) in fast.phi.iter().zip(&brute.phi) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                prop_assert!(fast.additivity_gap().abs() < 1e-9);
            }
        }

        #[test]
        fn unused_features_get_zero(seed in any::<u64>()) {
            let e = random_ensemble(seed, 6, EnsembleKind::Boosted);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&mut rng, 6);
            for ex in tree_shap_all(&e, &x).unwrap() {
                for j in 0..6 {
                    if !e.trees.iter().any(|t| t.uses_feature(j)) {
                        prop_assert_eq!(ex.phi[j], 0.0);
                    }
                }
            }
        }

        #[test]
        fn attributions_are_additive_across_trees(seed in any::<u64>()) {
            let e = random_ensemble(seed, 4, EnsembleKind::Boosted);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&mut rng, 4);
            let whole = tree_shap_all(&e, &x).unwrap();
            let mut summed = vec![vec![0.0; 4]; 3];
            for tree in &e.trees {
                let single = TreeEnsemble { trees: vec![tree.clone()], base_score: vec![0.0; 3], ..e.clone() };
                for (row, ex) in summed.iter_mut().zip(tree_shap_all(&single, &x).unwrap()) {
                    for (s, p) in row.iter_mut().zip(&ex.phi) {
                        *s += p;
                    }
                }
            }
            for (w, row) in whole.iter().zip(&summed) {
                for (a, b) in w.phi.iter().zip(row) {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn symmetric_features_share_credit(a in -2.0f64..2.0, b in -2.0f64..2.0, v in 0.0f64..1.0) {
            // Output depends only on whether both features clear 0; x0 and x1
            // play interchangeable roles.
            let tree = Tree {
                nodes: vec![
                    Node::Internal { feature_index: 0, threshold: 0.0, left: 1, right: 2, cover: 4.0 },
                    Node::Leaf { cover: 2.0, value: vec![0.0] },
                    Node::Internal { feature_index: 1, threshold: 0.0, left: 3, right: 4, cover: 2.0 },
                    Node::Leaf { cover: 1.0, value: vec![0.0] },
                    Node::Leaf { cover: 1.0, value: vec![v] },
                ],
            };
            let e = TreeEnsemble { kind: EnsembleKind::Boosted, n_classes: 1, n_features: 2, base_score: vec![0.0], trees: vec![tree] };
            let x = [a.abs(), b.abs()];
            let ex = tree_shap(&e, &x, 0).unwrap();
            prop_assert!((ex.phi[0] - ex.phi[1]).abs() < 1e-12);
        }
    }
}
