//! Single decision tree: greedy top-down induction with the Gini criterion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DepthLimit, FeatureSubset, ForestError};

/// A tree node. Internal nodes route `value <= threshold` to the left;
/// leaves keep the full training class distribution so probabilities and
/// path-dependent Shapley marginalization both work from the same counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        node_sample_count: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_distribution: Vec<usize>,
        node_sample_count: usize,
    },
}

impl TreeNode {
    pub fn sample_count(&self) -> usize {
        match self {
            TreeNode::Internal {
                node_sample_count, ..
            }
            | TreeNode::Leaf {
                node_sample_count, ..
            } => *node_sample_count,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Leaf class proportions for the instance's root-to-leaf path.
    pub fn leaf_proportions(&self, x: &[f64], out: &mut [f64]) {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf {
                    class_distribution,
                    node_sample_count,
                } => {
                    let total = *node_sample_count as f64;
                    for (o, &c) in out.iter_mut().zip(class_distribution) {
                        *o = c as f64 / total;
                    }
                    return;
                }
            }
        }
    }

    pub fn max_depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.max_depth().max(right.max_depth()),
        }
    }

    /// Checks the structural invariants: children counts sum to the parent,
    /// leaf distributions sum to their count, feature indices in range.
    pub fn validate(&self, n_classes: usize, n_features: usize) -> Result<(), ForestError> {
        match self {
            TreeNode::Leaf {
                class_distribution,
                node_sample_count,
            } => {
                if class_distribution.len() != n_classes {
                    return Err(ForestError::Corrupt {
                        reason: format!(
                            "leaf distribution has {} classes, expected {n_classes}",
                            class_distribution.len()
                        ),
                    });
                }
                if class_distribution.iter().sum::<usize>() != *node_sample_count {
                    return Err(ForestError::Corrupt {
                        reason: "leaf distribution does not sum to its sample count".to_string(),
                    });
                }
                if *node_sample_count == 0 {
                    return Err(ForestError::Corrupt {
                        reason: "node with zero sample count".to_string(),
                    });
                }
                Ok(())
            }
            TreeNode::Internal {
                feature_index,
                node_sample_count,
                left,
                right,
                ..
            } => {
                if *feature_index >= n_features {
                    return Err(ForestError::Corrupt {
                        reason: format!(
                            "feature index {feature_index} out of range 0..{n_features}"
                        ),
                    });
                }
                if left.sample_count() + right.sample_count() != *node_sample_count {
                    return Err(ForestError::Corrupt {
                        reason: "children sample counts do not sum to the parent".to_string(),
                    });
                }
                left.validate(n_classes, n_features)?;
                right.validate(n_classes, n_features)
            }
        }
    }
}

fn class_counts(y: &[usize], indices: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for &i in indices {
        counts[y[i]] += 1;
    }
    counts
}

struct SplitCandidate {
    feature_index: usize,
    threshold: f64,
    /// Sum of child (count - sum_of_squares/count); lower is purer.
    score: f64,
}

/// Best Gini split over a random feature subset.
///
/// Features are scanned in a seeded random permutation; constant features do
/// not count toward the `mtry` quota, so a valid split is found whenever one
/// exists. Zero-gain splits are allowed: checkerboard patterns need them.
fn best_split(
    x: &[Vec<f64>],
    y: &[usize],
    indices: &[usize],
    n_classes: usize,
    mtry: usize,
    rng: &mut ChaCha8Rng,
    feature_order: &mut Vec<usize>,
) -> Option<SplitCandidate> {
    let n_features = x[0].len();
    feature_order.clear();
    feature_order.extend(0..n_features);
    feature_order.shuffle(rng);

    let mut best: Option<SplitCandidate> = None;
    let mut non_constant_seen = 0usize;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(indices.len());

    for &feature in feature_order.iter() {
        if non_constant_seen >= mtry {
            break;
        }
        pairs.clear();
        pairs.extend(indices.iter().map(|&i| (x[i][feature], y[i])));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            continue; // constant on this node
        }
        non_constant_seen += 1;

        // Incremental sweep: move samples left one by one, evaluate at value
        // boundaries. Counts are exact integers, so the score is reproducible.
        let total = pairs.len();
        let mut left_counts = vec![0u64; n_classes];
        let mut right_counts = vec![0u64; n_classes];
        for &(_, label) in pairs.iter() {
            right_counts[label] += 1;
        }
        let mut left_sq: u64 = 0;
        let mut right_sq: u64 = right_counts.iter().map(|&c| c * c).sum();
        for k in 1..total {
            let label = pairs[k - 1].1;
            left_sq += 2 * left_counts[label] + 1;
            right_sq -= 2 * right_counts[label] - 1;
            left_counts[label] += 1;
            right_counts[label] -= 1;
            let (prev, next) = (pairs[k - 1].0, pairs[k].0);
            if prev == next {
                continue;
            }
            let n_left = k as f64;
            let n_right = (total - k) as f64;
            let score =
                (n_left - left_sq as f64 / n_left) + (n_right - right_sq as f64 / n_right);
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = prev + (next - prev) / 2.0;
                if threshold >= next {
                    threshold = prev; // adjacent floats: fall back to the lower value
                }
                best = Some(SplitCandidate {
                    feature_index: feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

/// Fixed induction context; only the index set, depth and RNG vary per node.
struct GrowContext<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: DepthLimit,
    mtry: usize,
}

fn grow(
    ctx: &GrowContext<'_>,
    indices: Vec<usize>,
    depth: usize,
    rng: &mut ChaCha8Rng,
    feature_order: &mut Vec<usize>,
) -> TreeNode {
    let counts = class_counts(ctx.y, &indices, ctx.n_classes);
    let node_sample_count = indices.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_reached = match ctx.max_depth {
        DepthLimit::Unlimited => false,
        DepthLimit::At(d) => depth >= d as usize,
    };
    if node_sample_count < 2 || pure || depth_reached {
        return TreeNode::Leaf {
            class_distribution: counts,
            node_sample_count,
        };
    }
    let Some(split) = best_split(
        ctx.x,
        ctx.y,
        &indices,
        ctx.n_classes,
        ctx.mtry,
        rng,
        feature_order,
    ) else {
        return TreeNode::Leaf {
            class_distribution: counts,
            node_sample_count,
        };
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .into_iter()
        .partition(|&i| ctx.x[i][split.feature_index] <= split.threshold);
    debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());
    let left = grow(ctx, left_idx, depth + 1, rng, feature_order);
    let right = grow(ctx, right_idx, depth + 1, rng, feature_order);
    TreeNode::Internal {
        feature_index: split.feature_index,
        threshold: split.threshold,
        node_sample_count,
        left: Box::new(left),
        right: Box::new(right),
    }
}

pub(super) fn check_training_input(x: &[Vec<f64>], y: &[usize]) -> Result<usize, ForestError> {
    if x.is_empty() || y.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ForestError::InconsistentRows {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let width = x[0].len();
    if width == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    for row in x {
        if row.len() != width {
            return Err(ForestError::InconsistentRows {
                rows: width,
                labels: row.len(),
            });
        }
    }
    Ok(width)
}

/// Fits one tree on the given sample indices (with multiplicity, for
/// bootstrap resamples).
pub(super) fn fit_tree_on_indices(
    x: &[Vec<f64>],
    y: &[usize],
    indices: Vec<usize>,
    n_classes: usize,
    max_depth: DepthLimit,
    features_per_split: FeatureSubset,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let n_features = x[0].len();
    let ctx = GrowContext {
        x,
        y,
        n_classes,
        max_depth,
        mtry: features_per_split.resolve(n_features),
    };
    let mut feature_order = Vec::with_capacity(n_features);
    grow(&ctx, indices, 0, rng, &mut feature_order)
}

/// Fits a single tree on the full training set.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    max_depth: DepthLimit,
    features_per_split: FeatureSubset,
    seed: u64,
) -> Result<TreeNode, ForestError> {
    check_training_input(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..x.len()).collect();
    Ok(fit_tree_on_indices(
        x,
        y,
        indices,
        n_classes,
        max_depth,
        features_per_split,
        &mut rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_is_a_leaf() {
        let tree = fit_tree(
            &[vec![0.3, 0.7]],
            &[1],
            3,
            DepthLimit::Unlimited,
            FeatureSubset::All,
            0,
        )
        .unwrap();
        match tree {
            TreeNode::Leaf {
                class_distribution,
                node_sample_count,
            } => {
                assert_eq!(class_distribution, vec![0, 1, 0]);
                assert_eq!(node_sample_count, 1);
            }
            _ => panic!("expected a leaf"),
        }
    }

    #[test]
    fn separable_pair_splits_between_values() {
        let tree = fit_tree(
            &[vec![0.0], vec![1.0]],
            &[0, 1],
            2,
            DepthLimit::At(1),
            FeatureSubset::All,
            0,
        )
        .unwrap();
        match &tree {
            TreeNode::Internal {
                threshold,
                left,
                right,
                ..
            } => {
                assert!(*threshold > 0.0 && *threshold < 1.0);
                assert!(left.is_leaf() && right.is_leaf());
                let mut probs = [0.0; 2];
                left.leaf_proportions(&[0.0], &mut probs);
                assert_eq!(probs, [1.0, 0.0]);
                right.leaf_proportions(&[1.0], &mut probs);
                assert_eq!(probs, [0.0, 1.0]);
            }
            _ => panic!("expected a split"),
        }
        tree.validate(2, 1).unwrap();
    }

    // Checkerboard labels: no single split reduces impurity, yet the tree
    // must still fit the four points exactly at depth 2.
    #[test]
    fn xor_is_fit_exactly_at_depth_two() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![0, 1, 1, 0];
        let tree = fit_tree(&x, &y, 2, DepthLimit::At(2), FeatureSubset::All, 7).unwrap();
        let mut probs = [0.0; 2];
        for (row, &label) in x.iter().zip(&y) {
            tree.leaf_proportions(row, &mut probs);
            let predicted = if probs[1] > probs[0] { 1 } else { 0 };
            assert_eq!(predicted, label, "row {row:?}");
        }
        tree.validate(2, 2).unwrap();
    }

    #[test]
    fn empty_and_inconsistent_inputs_rejected() {
        assert!(matches!(
            fit_tree(&[], &[], 2, DepthLimit::Unlimited, FeatureSubset::All, 0),
            Err(ForestError::EmptyTrainingSet)
        ));
        assert!(matches!(
            fit_tree(
                &[vec![1.0], vec![1.0, 2.0]],
                &[0, 1],
                2,
                DepthLimit::Unlimited,
                FeatureSubset::All,
                0
            ),
            Err(ForestError::InconsistentRows { .. })
        ));
    }

    #[test]
    fn depth_zero_yields_root_leaf() {
        let tree = fit_tree(
            &[vec![0.0], vec![1.0]],
            &[0, 1],
            2,
            DepthLimit::At(0),
            FeatureSubset::All,
            0,
        )
        .unwrap();
        assert!(tree.is_leaf());
    }
}
