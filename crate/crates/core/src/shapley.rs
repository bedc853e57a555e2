//! Exact per-point Shapley attributions for forest predictions.
//!
//! Feature removal is path-dependent: an absent feature is marginalized by
//! routing down both branches weighted by training-sample proportions
//! (`node_sample_count`). [`tree_shap`] computes the Shapley values of that
//! set function in polynomial time with the extend/unwind path recursion
//! known from tree explainers; [`brute_force_shap`] evaluates the 2^D
//! definition directly and serves as the independent oracle for it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{Forest, TreeNode};
use crate::preprocess::FeatureVector;

/// Hard cap for the brute-force enumeration (cost 2^D).
pub const MAX_BRUTE_FORCE_FEATURES: usize = 20;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("instance has {got} features, the forest was trained on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class index {class_index} is outside 0..{n_classes}")]
    ClassOutOfRange {
        class_index: usize,
        n_classes: usize,
    },
    #[error("{features} features exceed the brute-force limit of {max}")]
    TooManyFeatures { features: usize, max: usize },
    #[error("forest node has zero sample count; counts are required for marginalization")]
    MissingSampleCounts,
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
}

/// Per-point Shapley values for one instance and one class.
///
/// Local accuracy: `base_value + values.sum()` equals the forest's predicted
/// probability for `class_index` on this instance (within 1e-9).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub instance_id: String,
    pub class_index: usize,
    pub base_value: f64,
    pub values: Vec<f64>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>()
    }
}

/// Which class to explain per instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPolicy {
    /// The class the model predicts for the instance (the operator-facing
    /// default).
    Predicted,
    Fixed(usize),
    All,
}

fn check_instance(forest: &Forest, x: &FeatureVector, class_index: usize) -> Result<(), ShapleyError> {
    if x.values.len() != forest.n_features {
        return Err(ShapleyError::DimensionMismatch {
            expected: forest.n_features,
            got: x.values.len(),
        });
    }
    if class_index >= forest.n_classes {
        return Err(ShapleyError::ClassOutOfRange {
            class_index,
            n_classes: forest.n_classes,
        });
    }
    Ok(())
}

fn leaf_value(dist: &[usize], count: usize, class_index: usize) -> f64 {
    dist[class_index] as f64 / count as f64
}

/// Training-distribution expectation of the tree's output for one class:
/// leaf values weighted by node-count path proportions.
fn expectation(node: &TreeNode, class_index: usize) -> Result<f64, ShapleyError> {
    match node {
        TreeNode::Leaf {
            class_distribution,
            node_sample_count,
        } => {
            if *node_sample_count == 0 {
                return Err(ShapleyError::MissingSampleCounts);
            }
            Ok(leaf_value(class_distribution, *node_sample_count, class_index))
        }
        TreeNode::Internal {
            node_sample_count,
            left,
            right,
            ..
        } => {
            if *node_sample_count == 0 {
                return Err(ShapleyError::MissingSampleCounts);
            }
            let total = *node_sample_count as f64;
            Ok(left.sample_count() as f64 / total * expectation(left, class_index)?
                + right.sample_count() as f64 / total * expectation(right, class_index)?)
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature_index: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(
    path: &mut [PathElement],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature_index: Option<usize>,
) {
    path[unique_depth] = PathElement {
        feature_index,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..unique_depth).rev() {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        path[i].pweight =
            zero_fraction * path[i].pweight * (unique_depth - i) as f64 / (unique_depth + 1) as f64;
    }
}

fn unwind_path(path: &mut [PathElement], unique_depth: usize, path_index: usize) {
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        path[i].feature_index = path[i + 1].feature_index;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}

struct TreeShapContext<'a> {
    x: &'a [f64],
    class_index: usize,
    phi: &'a mut [f64],
}

fn tree_shap_recurse(
    ctx: &mut TreeShapContext<'_>,
    node: &TreeNode,
    path: &mut [PathElement],
    mut unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature_index: Option<usize>,
) -> Result<(), ShapleyError> {
    extend_path(
        path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature_index,
    );
    match node {
        TreeNode::Leaf {
            class_distribution,
            node_sample_count,
        } => {
            if *node_sample_count == 0 {
                return Err(ShapleyError::MissingSampleCounts);
            }
            let value = leaf_value(class_distribution, *node_sample_count, ctx.class_index);
            for i in 1..=unique_depth {
                let weight = unwound_path_sum(path, unique_depth, i);
                let element = &path[i];
                let feature = element.feature_index.expect("non-root path element");
                ctx.phi[feature] += weight * (element.one_fraction - element.zero_fraction) * value;
            }
            Ok(())
        }
        TreeNode::Internal {
            feature_index,
            threshold,
            node_sample_count,
            left,
            right,
        } => {
            if *node_sample_count == 0 {
                return Err(ShapleyError::MissingSampleCounts);
            }
            let (hot, cold) = if ctx.x[*feature_index] <= *threshold {
                (left.as_ref(), right.as_ref())
            } else {
                (right.as_ref(), left.as_ref())
            };
            let total = *node_sample_count as f64;
            let hot_zero_fraction = hot.sample_count() as f64 / total;
            let cold_zero_fraction = cold.sample_count() as f64 / total;
            let mut incoming_zero_fraction = 1.0;
            let mut incoming_one_fraction = 1.0;

            // The same feature may appear again along the path: undo its
            // previous contribution and fold the fractions together.
            if let Some(path_index) =
                (1..=unique_depth).find(|&i| path[i].feature_index == Some(*feature_index))
            {
                incoming_zero_fraction = path[path_index].zero_fraction;
                incoming_one_fraction = path[path_index].one_fraction;
                unwind_path(path, unique_depth, path_index);
                unique_depth -= 1;
            }

            let (parent_path, child_path) = path.split_at_mut(unique_depth + 1);
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            tree_shap_recurse(
                ctx,
                hot,
                child_path,
                unique_depth + 1,
                hot_zero_fraction * incoming_zero_fraction,
                incoming_one_fraction,
                Some(*feature_index),
            )?;
            child_path[..parent_path.len()].copy_from_slice(parent_path);
            tree_shap_recurse(
                ctx,
                cold,
                child_path,
                unique_depth + 1,
                cold_zero_fraction * incoming_zero_fraction,
                0.0,
                Some(*feature_index),
            )
        }
    }
}

fn tree_contributions(
    tree: &TreeNode,
    x: &[f64],
    class_index: usize,
    phi: &mut [f64],
) -> Result<(), ShapleyError> {
    let depth = tree.max_depth() + 2;
    let mut path = vec![PathElement::default(); depth * (depth + 1) / 2];
    let mut ctx = TreeShapContext { x, class_index, phi };
    tree_shap_recurse(&mut ctx, tree, &mut path, 0, 1.0, 1.0, None)
}

/// Exact Shapley attribution under path-dependent feature removal; the
/// forest attribution is the mean of the per-tree attributions.
pub fn tree_shap(
    forest: &Forest,
    x: &FeatureVector,
    class_index: usize,
) -> Result<Attribution, ShapleyError> {
    check_instance(forest, x, class_index)?;
    let d = forest.n_features;
    let mut phi = vec![0.0; d];
    let mut base_value = 0.0;
    for tree in &forest.trees {
        base_value += expectation(tree, class_index)?;
        tree_contributions(tree, &x.values, class_index, &mut phi)?;
    }
    let n_trees = forest.trees.len() as f64;
    for v in &mut phi {
        *v /= n_trees;
    }
    base_value /= n_trees;
    Ok(Attribution {
        instance_id: x.id.clone(),
        class_index,
        base_value,
        values: phi,
    })
}

/// Tree output with the coalition's features fixed to the instance and all
/// others marginalized by node-count routing.
fn eval_with_coalition(node: &TreeNode, x: &[f64], coalition: u32, class_index: usize) -> f64 {
    match node {
        TreeNode::Leaf {
            class_distribution,
            node_sample_count,
        } => leaf_value(class_distribution, *node_sample_count, class_index),
        TreeNode::Internal {
            feature_index,
            threshold,
            node_sample_count,
            left,
            right,
        } => {
            if coalition & (1 << feature_index) != 0 {
                let child = if x[*feature_index] <= *threshold {
                    left
                } else {
                    right
                };
                eval_with_coalition(child, x, coalition, class_index)
            } else {
                let total = *node_sample_count as f64;
                left.sample_count() as f64 / total
                    * eval_with_coalition(left, x, coalition, class_index)
                    + right.sample_count() as f64 / total
                        * eval_with_coalition(right, x, coalition, class_index)
            }
        }
    }
}

/// Direct evaluation of the Shapley definition over all 2^D coalitions.
///
/// Test oracle for [`tree_shap`]; restricted to D <= 20.
pub fn brute_force_shap(
    forest: &Forest,
    x: &FeatureVector,
    class_index: usize,
) -> Result<Attribution, ShapleyError> {
    check_instance(forest, x, class_index)?;
    let d = forest.n_features;
    if d > MAX_BRUTE_FORCE_FEATURES {
        return Err(ShapleyError::TooManyFeatures {
            features: d,
            max: MAX_BRUTE_FORCE_FEATURES,
        });
    }
    for tree in &forest.trees {
        tree.validate(forest.n_classes, forest.n_features)
            .map_err(|_| ShapleyError::MissingSampleCounts)?;
    }

    let n_masks = 1usize << d;
    let n_trees = forest.trees.len() as f64;
    let mut value = vec![0.0f64; n_masks];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut sum = 0.0;
        for tree in &forest.trees {
            sum += eval_with_coalition(tree, &x.values, mask as u32, class_index);
        }
        *v = sum / n_trees;
    }

    // w[t] = t! (d-t-1)! / d! = 1 / (d * C(d-1, t)), exact in f64 for d <= 20.
    let mut binom = vec![1.0f64; d];
    for t in 1..d {
        binom[t] = binom[t - 1] * (d - t) as f64 / t as f64;
    }
    let weights: Vec<f64> = binom.iter().map(|c| 1.0 / (d as f64 * c)).collect();

    let mut phi = vec![0.0; d];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                let t = (mask as u32).count_ones() as usize;
                *phi_i += weights[t] * (value[mask | bit] - value[mask]);
            }
        }
    }
    Ok(Attribution {
        instance_id: x.id.clone(),
        class_index,
        base_value: value[0],
        values: phi,
    })
}

/// Explains a batch of instances under a class policy; output order is
/// instance-major (and class-minor under `All`).
pub fn explain_batch(
    forest: &Forest,
    xs: &[FeatureVector],
    policy: ClassPolicy,
) -> Result<Vec<Attribution>, ShapleyError> {
    if let ClassPolicy::Fixed(class_index) = policy {
        if class_index >= forest.n_classes {
            return Err(ShapleyError::ClassOutOfRange {
                class_index,
                n_classes: forest.n_classes,
            });
        }
    }
    let nested: Vec<Vec<Attribution>> = xs
        .par_iter()
        .map(|x| -> Result<Vec<Attribution>, ShapleyError> {
            match policy {
                ClassPolicy::Predicted => {
                    let class_index = forest.predict(&x.values)?;
                    Ok(vec![tree_shap(forest, x, class_index)?])
                }
                ClassPolicy::Fixed(class_index) => Ok(vec![tree_shap(forest, x, class_index)?]),
                ClassPolicy::All => (0..forest.n_classes)
                    .map(|c| tree_shap(forest, x, c))
                    .collect(),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// CSV export: `id,class_index,base_value,s_0..s_{D-1}`.
pub fn attributions_to_csv(attributions: &[Attribution]) -> String {
    let d = attributions.first().map_or(0, |a| a.values.len());
    let mut out = String::from("id,class_index,base_value");
    for i in 0..d {
        out.push_str(&format!(",s_{i}"));
    }
    out.push('\n');
    for a in attributions {
        out.push_str(&format!("{},{},{}", a.instance_id, a.class_index, a.base_value));
        for v in &a.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit_forest, DepthLimit, FeatureSubset, ForestHyperParams};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(dist: Vec<usize>) -> TreeNode {
        let count = dist.iter().sum();
        TreeNode::Leaf {
            class_distribution: dist,
            node_sample_count: count,
        }
    }

    fn internal(feature_index: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
        let node_sample_count = left.sample_count() + right.sample_count();
        TreeNode::Internal {
            feature_index,
            threshold,
            node_sample_count,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn forest_of(trees: Vec<TreeNode>, n_classes: usize, n_features: usize) -> Forest {
        let n_estimators = trees.len();
        Forest {
            trees,
            n_classes,
            n_features,
            class_names: vec![String::new(); n_classes],
            hyperparams: ForestHyperParams {
                n_estimators,
                ..ForestHyperParams::default()
            },
            seed: 0,
            base_rate: vec![0.0; n_classes],
        }
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            id: "i".to_string(),
            values,
        }
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    fn local_accuracy_error(forest: &Forest, x: &FeatureVector, a: &Attribution) -> f64 {
        let proba = forest.predict_proba(&x.values).unwrap()[a.class_index];
        (a.total() - proba).abs()
    }

    #[test]
    fn constant_model_attributes_nothing() {
        let forest = forest_of(vec![leaf(vec![1, 3])], 2, 4);
        let x = fv(vec![0.1, 0.2, 0.3, 0.4]);
        for algo in [tree_shap, brute_force_shap] {
            let a = algo(&forest, &x, 1).unwrap();
            assert_eq!(a.values, vec![0.0; 4]);
            assert!((a.base_value - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn single_split_only_credits_the_split_feature() {
        // Feature 1 splits 3 class-0 samples left, 1 class-1 sample right.
        let tree = internal(1, 0.5, leaf(vec![3, 0]), leaf(vec![0, 1]));
        let forest = forest_of(vec![tree], 2, 3);
        let x = fv(vec![0.9, 0.9, 0.9]); // routed right, the "1" side
        for algo in [tree_shap, brute_force_shap] {
            let a = algo(&forest, &x, 1).unwrap();
            assert!(a.values[0].abs() < 1e-12, "dummy feature 0 got {}", a.values[0]);
            assert!(a.values[2].abs() < 1e-12, "dummy feature 2 got {}", a.values[2]);
            // Fraction p = 1/4 of training samples reach the "1" leaf:
            // phi_j = 1 - p = 0.75, hand-enumerated over the two coalitions.
            assert!((a.values[1] - 0.75).abs() < 1e-12, "got {}", a.values[1]);
            assert!((a.base_value - 0.25).abs() < 1e-12);
            assert!(local_accuracy_error(&forest, &x, &a) < 1e-12);
        }
    }

    #[test]
    fn symmetric_features_get_equal_credit() {
        // f(x) = 1 iff x0 > 0.5 and x1 > 0.5, with symmetric counts.
        let tree = internal(
            0,
            0.5,
            leaf(vec![4, 0]),
            internal(1, 0.5, leaf(vec![2, 0]), leaf(vec![0, 2])),
        );
        let forest = forest_of(vec![tree], 2, 2);
        let x = fv(vec![0.9, 0.9]);
        let a = brute_force_shap(&forest, &x, 1).unwrap();
        assert!(
            (a.values[0] - a.values[1]).abs() < 1e-12,
            "asymmetric: {:?}",
            a.values
        );
        let b = tree_shap(&forest, &x, 1).unwrap();
        assert_close(&a.values, &b.values, 1e-12);
    }

    #[test]
    fn repeated_feature_along_a_path_matches_oracle() {
        // Feature 0 appears twice on the same path.
        let tree = internal(
            0,
            0.6,
            internal(
                0,
                0.3,
                leaf(vec![2, 0]),
                internal(1, 0.5, leaf(vec![1, 1]), leaf(vec![0, 3])),
            ),
            leaf(vec![4, 1]),
        );
        let forest = forest_of(vec![tree], 2, 3);
        for values in [
            vec![0.1, 0.2, 0.9],
            vec![0.5, 0.7, 0.2],
            vec![0.9, 0.4, 0.5],
        ] {
            let x = fv(values);
            let exact = tree_shap(&forest, &x, 1).unwrap();
            let oracle = brute_force_shap(&forest, &x, 1).unwrap();
            assert_close(&exact.values, &oracle.values, 1e-12);
            assert!((exact.base_value - oracle.base_value).abs() < 1e-12);
        }
    }

    fn random_tree(
        rng: &mut ChaCha8Rng,
        depth: usize,
        n_features: usize,
        n_classes: usize,
        count: usize,
    ) -> TreeNode {
        if depth == 0 || count < 2 || rng.gen_bool(0.25) {
            let mut dist = vec![0usize; n_classes];
            let mut remaining = count;
            for slot in dist.iter_mut().take(n_classes - 1) {
                let take = rng.gen_range(0..=remaining);
                *slot = take;
                remaining -= take;
            }
            dist[n_classes - 1] = remaining;
            return TreeNode::Leaf {
                class_distribution: dist,
                node_sample_count: count,
            };
        }
        let left_count = rng.gen_range(1..count);
        let left = random_tree(rng, depth - 1, n_features, n_classes, left_count);
        let right = random_tree(rng, depth - 1, n_features, n_classes, count - left_count);
        internal(
            rng.gen_range(0..n_features),
            rng.gen_range(0.05..0.95),
            left,
            right,
        )
    }

    #[test]
    fn random_forests_match_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..40 {
            let n_features = rng.gen_range(2..=8);
            let n_classes = rng.gen_range(2..=3);
            let n_trees = rng.gen_range(1..=4);
            let trees: Vec<TreeNode> = (0..n_trees)
                .map(|_| {
                    let count = rng.gen_range(4..40);
                    random_tree(&mut rng, 3, n_features, n_classes, count)
                })
                .collect();
            let forest = forest_of(trees, n_classes, n_features);
            let x = fv((0..n_features).map(|_| rng.gen_range(0.0..1.0)).collect());
            let class_index = rng.gen_range(0..n_classes);
            let exact = tree_shap(&forest, &x, class_index).unwrap();
            let oracle = brute_force_shap(&forest, &x, class_index).unwrap();
            assert_close(&exact.values, &oracle.values, 1e-9);
            assert!(
                (exact.base_value - oracle.base_value).abs() < 1e-9,
                "case {case}"
            );
            assert!(local_accuracy_error(&forest, &x, &exact) < 1e-9, "case {case}");
        }
    }

    #[test]
    fn forest_attribution_is_mean_of_tree_attributions() {
        let t1 = internal(0, 0.5, leaf(vec![3, 1]), leaf(vec![0, 2]));
        let t2 = internal(1, 0.4, leaf(vec![2, 2]), leaf(vec![1, 3]));
        let forest = forest_of(vec![t1.clone(), t2.clone()], 2, 2);
        let x = fv(vec![0.7, 0.2]);
        let combined = tree_shap(&forest, &x, 1).unwrap();
        let a1 = tree_shap(&forest_of(vec![t1], 2, 2), &x, 1).unwrap();
        let a2 = tree_shap(&forest_of(vec![t2], 2, 2), &x, 1).unwrap();
        for i in 0..2 {
            let mean = (a1.values[i] + a2.values[i]) / 2.0;
            assert!((combined.values[i] - mean).abs() < 1e-15);
        }
        let mean_base = (a1.base_value + a2.base_value) / 2.0;
        assert!((combined.base_value - mean_base).abs() < 1e-15);
    }

    #[test]
    fn local_accuracy_on_a_fitted_forest() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..6).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = x
            .iter()
            .map(|row| if row[2] > 0.5 { 1 } else { usize::from(row[4] > 0.6) * 2 })
            .collect();
        let hp = ForestHyperParams {
            n_estimators: 15,
            max_depth: DepthLimit::At(6),
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 77).unwrap();
        for (i, row) in x.iter().take(10).enumerate() {
            let instance = fv(row.clone());
            for class_index in 0..3 {
                let a = tree_shap(&forest, &instance, class_index).unwrap();
                assert!(
                    local_accuracy_error(&forest, &instance, &a) <= 1e-9,
                    "row {i} class {class_index}"
                );
            }
        }
    }

    #[test]
    fn batch_is_pure_composition() {
        let tree = internal(0, 0.5, leaf(vec![3, 1]), leaf(vec![1, 3]));
        let forest = forest_of(vec![tree], 2, 2);
        let xs = vec![fv(vec![0.1, 0.9]), fv(vec![0.9, 0.1])];
        assert!(explain_batch(&forest, &[], ClassPolicy::Predicted)
            .unwrap()
            .is_empty());
        let batch = explain_batch(&forest, &xs, ClassPolicy::Predicted).unwrap();
        assert_eq!(batch.len(), 2);
        for (x, batched) in xs.iter().zip(&batch) {
            let class_index = forest.predict(&x.values).unwrap();
            let single = tree_shap(&forest, x, class_index).unwrap();
            assert_eq!(batched, &single);
        }
        let all = explain_batch(&forest, &xs, ClassPolicy::All).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].class_index, 0);
        assert_eq!(all[1].class_index, 1);
        assert_eq!(all[0].instance_id, all[1].instance_id);
    }

    #[test]
    fn rejects_bad_dimensions_and_classes() {
        let forest = forest_of(vec![leaf(vec![1, 1])], 2, 3);
        assert!(matches!(
            tree_shap(&forest, &fv(vec![0.0; 2]), 0),
            Err(ShapleyError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            tree_shap(&forest, &fv(vec![0.0; 3]), 5),
            Err(ShapleyError::ClassOutOfRange { .. })
        ));
        let wide = forest_of(vec![leaf(vec![1, 1])], 2, 25);
        assert!(matches!(
            brute_force_shap(&wide, &fv(vec![0.0; 25]), 0),
            Err(ShapleyError::TooManyFeatures { .. })
        ));
    }

    #[test]
    fn csv_export_has_expected_shape() {
        let a = Attribution {
            instance_id: "c1".to_string(),
            class_index: 2,
            base_value: 0.25,
            values: vec![0.1, -0.05, 0.0],
        };
        let csv = attributions_to_csv(&[a]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "id,class_index,base_value,s_0,s_1,s_2");
        assert_eq!(lines.next().unwrap(), "c1,2,0.25,0.1,-0.05,0");
    }
}
