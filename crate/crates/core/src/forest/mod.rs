//! Random-forest multi-class classifier built from scratch.
//!
//! Trees grow on bootstrap resamples with a random feature subset per split;
//! prediction averages the leaf class proportions over all trees. Per-tree
//! RNG streams are derived from `(forest seed, tree index)`, so training is
//! parallel across trees yet bit-identical regardless of thread count.

mod cv;
mod tree;

pub use cv::{grid_search, kfold_cv, CvReport, FoldMetrics, HyperGrid};
pub use tree::{fit_tree, TreeNode};

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::derive_seed;

pub const FOREST_SCHEMA: &str = "forcesight.forest/v1";

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("inconsistent input: {rows} vs {labels}")]
    InconsistentRows { rows: usize, labels: usize },
    #[error("label index {label} is outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("input has {got} features, the forest was trained on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cross-validation needs at least 2 folds, got {folds}")]
    TooFewFolds { folds: usize },
    #[error("{samples} samples cannot fill {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("corrupt forest: {reason}")]
    Corrupt { reason: String },
    #[error("unsupported forest schema {found:?}, expected {expected:?}")]
    SchemaMismatch { found: String, expected: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode forest {path}: {reason}")]
    Decode { path: String, reason: String },
}

/// Maximum tree depth. `Unlimited` is an explicit variant, never a sentinel
/// number; it serializes as the string `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepthLimit {
    Unlimited,
    At(u32),
}

impl DepthLimit {
    /// Rank for tie-breaking: shallower sorts first, unlimited last.
    pub fn rank(&self) -> u64 {
        match self {
            DepthLimit::At(d) => *d as u64,
            DepthLimit::Unlimited => u64::MAX,
        }
    }
}

impl std::fmt::Display for DepthLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DepthLimit::Unlimited => f.write_str("none"),
            DepthLimit::At(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for DepthLimit {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            DepthLimit::Unlimited => serializer.serialize_str("none"),
            DepthLimit::At(d) => serializer.serialize_u32(*d),
        }
    }
}

impl<'de> Deserialize<'de> for DepthLimit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(d) => Ok(DepthLimit::At(d)),
            Repr::Text(s) if s.eq_ignore_ascii_case("none") => Ok(DepthLimit::Unlimited),
            Repr::Text(s) if s.eq_ignore_ascii_case("unlimited") => Ok(DepthLimit::Unlimited),
            Repr::Text(s) => Err(D::Error::custom(format!(
                "expected a depth or \"none\", got {s:?}"
            ))),
        }
    }
}

/// Number of candidate features per split. `Sqrt` is ceil(sqrt(D)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSubset {
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubset {
    pub fn resolve(&self, n_features: usize) -> usize {
        match self {
            FeatureSubset::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            FeatureSubset::All => n_features,
            FeatureSubset::Count(c) => (*c).clamp(1, n_features),
        }
        .max(1)
    }
}

impl Serialize for FeatureSubset {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FeatureSubset::Sqrt => serializer.serialize_str("sqrt"),
            FeatureSubset::All => serializer.serialize_str("all"),
            FeatureSubset::Count(c) => serializer.serialize_u64(*c as u64),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureSubset {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(usize),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(c) => Ok(FeatureSubset::Count(c)),
            Repr::Text(s) if s.eq_ignore_ascii_case("sqrt") => Ok(FeatureSubset::Sqrt),
            Repr::Text(s) if s.eq_ignore_ascii_case("all") => Ok(FeatureSubset::All),
            Repr::Text(s) => Err(D::Error::custom(format!(
                "expected a count, \"sqrt\" or \"all\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyperParams {
    pub n_estimators: usize,
    pub max_depth: DepthLimit,
    pub features_per_split: FeatureSubset,
    pub bootstrap: bool,
}

impl Default for ForestHyperParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: DepthLimit::Unlimited,
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
        }
    }
}

/// A trained ensemble plus its training provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub n_classes: usize,
    pub n_features: usize,
    pub class_names: Vec<String>,
    pub hyperparams: ForestHyperParams,
    pub seed: u64,
    /// Per-class mean predicted probability over the training data.
    pub base_rate: Vec<f64>,
}

#[derive(Serialize)]
struct ForestFileRef<'a> {
    schema: &'a str,
    forest: &'a Forest,
}

#[derive(Deserialize)]
struct ForestFile {
    schema: String,
    forest: Forest,
}

impl Forest {
    /// Mean over trees of the leaf class proportions; sums to 1 within 1e-12.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut acc = vec![0.0; self.n_classes];
        let mut leaf = vec![0.0; self.n_classes];
        for tree in &self.trees {
            tree.leaf_proportions(x, &mut leaf);
            for (a, &l) in acc.iter_mut().zip(&leaf) {
                *a += l;
            }
        }
        let n_trees = self.trees.len() as f64;
        for a in &mut acc {
            *a /= n_trees;
        }
        Ok(acc)
    }

    /// Argmax of `predict_proba`; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ForestError> {
        let probs = self.predict_proba(x)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Predicted class index for every row, in row order.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<usize>, ForestError> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.trees.len() != self.hyperparams.n_estimators {
            return Err(ForestError::Corrupt {
                reason: format!(
                    "{} trees but n_estimators = {}",
                    self.trees.len(),
                    self.hyperparams.n_estimators
                ),
            });
        }
        for tree in &self.trees {
            tree.validate(self.n_classes, self.n_features)?;
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ForestFileRef {
            schema: FOREST_SCHEMA,
            forest: self,
        })
        .expect("forest serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Forest, ForestError> {
        let file: ForestFile =
            serde_json::from_str(text).map_err(|e| ForestError::Decode {
                path: "<string>".to_string(),
                reason: e.to_string(),
            })?;
        if file.schema != FOREST_SCHEMA {
            return Err(ForestError::SchemaMismatch {
                found: file.schema,
                expected: FOREST_SCHEMA.to_string(),
            });
        }
        file.forest.validate()?;
        Ok(file.forest)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), ForestError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Forest, ForestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            ForestError::Decode { reason, .. } => ForestError::Decode {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

/// Trains an ensemble: each tree gets a seed derived from `(seed, index)`
/// and, when `bootstrap` is set, its own with-replacement resample of the
/// full training size.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    class_names: Vec<String>,
    hyperparams: &ForestHyperParams,
    seed: u64,
) -> Result<Forest, ForestError> {
    let n_features = tree::check_training_input(x, y)?;
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ForestError::LabelOutOfRange { label, n_classes });
    }
    let n = x.len();
    let trees: Vec<TreeNode> = (0..hyperparams.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let indices: Vec<usize> = if hyperparams.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree::fit_tree_on_indices(
                x,
                y,
                indices,
                n_classes,
                hyperparams.max_depth,
                hyperparams.features_per_split,
                &mut rng,
            )
        })
        .collect();

    let mut forest = Forest {
        trees,
        n_classes,
        n_features,
        class_names,
        hyperparams: *hyperparams,
        seed,
        base_rate: vec![0.0; n_classes],
    };
    let per_row: Vec<Vec<f64>> = x
        .par_iter()
        .map(|row| forest.predict_proba(row).expect("training row fits"))
        .collect();
    let mut base_rate = vec![0.0; n_classes];
    for probs in &per_row {
        for (b, &p) in base_rate.iter_mut().zip(probs) {
            *b += p;
        }
    }
    for b in &mut base_rate {
        *b /= n as f64;
    }
    forest.base_rate = base_rate;
    Ok(forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x = vec![
            vec![0.1, 0.9],
            vec![0.2, 0.8],
            vec![0.8, 0.2],
            vec![0.9, 0.1],
            vec![0.5, 0.5],
            vec![0.4, 0.6],
        ];
        let y = vec![0, 0, 1, 1, 2, 2];
        (x, y)
    }

    #[test]
    fn ensemble_of_one_reproduces_its_tree() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 1,
            max_depth: DepthLimit::Unlimited,
            features_per_split: FeatureSubset::All,
            bootstrap: false,
        };
        let forest = fit_forest(&x, &y, 3, vec!["a".into(), "b".into(), "c".into()], &hp, 11)
            .unwrap();
        let mut leaf = vec![0.0; 3];
        for row in &x {
            forest.trees[0].leaf_proportions(row, &mut leaf);
            assert_eq!(forest.predict_proba(row).unwrap(), leaf);
        }
    }

    #[test]
    fn identical_seeds_give_identical_forests() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 8,
            ..ForestHyperParams::default()
        };
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let f1 = fit_forest(&x, &y, 3, names.clone(), &hp, 99).unwrap();
        let f2 = fit_forest(&x, &y, 3, names, &hp, 99).unwrap();
        assert_eq!(f1.to_json_string(), f2.to_json_string());
        for row in &x {
            assert_eq!(
                f1.predict_proba(row).unwrap(),
                f2.predict_proba(row).unwrap()
            );
        }
    }

    #[test]
    fn probabilities_are_distributions() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 25,
            ..ForestHyperParams::default()
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 5).unwrap();
        for row in &x {
            let probs = forest.predict_proba(row).unwrap();
            assert!(probs.iter().all(|&p| p >= 0.0));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let rate_sum: f64 = forest.base_rate.iter().sum();
        assert!((rate_sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pure_leaf_tree_gives_one_hot() {
        let forest = Forest {
            trees: vec![TreeNode::Leaf {
                class_distribution: vec![0, 4, 0],
                node_sample_count: 4,
            }],
            n_classes: 3,
            n_features: 2,
            class_names: vec![String::new(); 3],
            hyperparams: ForestHyperParams {
                n_estimators: 1,
                ..ForestHyperParams::default()
            },
            seed: 0,
            base_rate: vec![0.0, 1.0, 0.0],
        };
        assert_eq!(forest.predict_proba(&[0.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(forest.predict(&[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn two_pure_trees_average_and_ties_break_low() {
        let leaf = |class: usize| TreeNode::Leaf {
            class_distribution: {
                let mut d = vec![0, 0, 0];
                d[class] = 2;
                d
            },
            node_sample_count: 2,
        };
        let forest = Forest {
            trees: vec![leaf(0), leaf(1)],
            n_classes: 3,
            n_features: 1,
            class_names: vec![String::new(); 3],
            hyperparams: ForestHyperParams {
                n_estimators: 2,
                ..ForestHyperParams::default()
            },
            seed: 0,
            base_rate: vec![0.5, 0.5, 0.0],
        };
        assert_eq!(forest.predict_proba(&[0.0]).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(forest.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn memorizes_distinct_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let hp = ForestHyperParams {
            n_estimators: 1,
            max_depth: DepthLimit::Unlimited,
            features_per_split: FeatureSubset::All,
            bootstrap: false,
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 17).unwrap();
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(forest.predict(row).unwrap(), label);
        }
    }

    #[test]
    fn forest_structure_validates() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 12,
            max_depth: DepthLimit::At(4),
            ..ForestHyperParams::default()
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 2).unwrap();
        forest.validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 5,
            max_depth: DepthLimit::At(3),
            ..ForestHyperParams::default()
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 8).unwrap();
        let text = forest.to_json_string();
        assert!(text.contains(FOREST_SCHEMA));
        let reloaded = Forest::from_json_str(&text).unwrap();
        assert_eq!(reloaded.to_json_string(), text);
        for row in &x {
            assert_eq!(
                forest.predict_proba(row).unwrap(),
                reloaded.predict_proba(row).unwrap()
            );
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 1,
            ..ForestHyperParams::default()
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 8).unwrap();
        let text = forest.to_json_string().replace(FOREST_SCHEMA, "bogus/v9");
        assert!(matches!(
            Forest::from_json_str(&text),
            Err(ForestError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (x, y) = tiny_dataset();
        let hp = ForestHyperParams {
            n_estimators: 1,
            ..ForestHyperParams::default()
        };
        let forest = fit_forest(&x, &y, 3, vec![String::new(); 3], &hp, 8).unwrap();
        assert!(matches!(
            forest.predict_proba(&[0.0, 0.0, 0.0]),
            Err(ForestError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn depth_limit_serde_round_trips() {
        let depths = vec![DepthLimit::Unlimited, DepthLimit::At(20)];
        let json = serde_json::to_string(&depths).unwrap();
        assert_eq!(json, "[\"none\",20]");
        let back: Vec<DepthLimit> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, depths);
        let subsets = vec![FeatureSubset::Sqrt, FeatureSubset::All, FeatureSubset::Count(23)];
        let json = serde_json::to_string(&subsets).unwrap();
        let back: Vec<FeatureSubset> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, subsets);
    }
}
