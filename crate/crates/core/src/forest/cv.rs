//! K-fold cross-validation and exhaustive hyperparameter grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_forest, DepthLimit, FeatureSubset, ForestError, ForestHyperParams};
use crate::metrics::{confusion, summary};
use crate::rng::derive_seed;

/// Accuracy plus macro-averaged precision/recall/F1 for one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl FoldMetrics {
    fn as_array(&self) -> [f64; 4] {
        [
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
        ]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            accuracy: a[0],
            macro_precision: a[1],
            macro_recall: a[2],
            macro_f1: a[3],
        }
    }
}

/// Per-fold metrics with their mean and population standard deviation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub hyperparams: ForestHyperParams,
    pub folds: Vec<FoldMetrics>,
    pub mean: FoldMetrics,
    pub std: FoldMetrics,
}

/// The hyperparameter search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<DepthLimit>,
    pub cv_folds: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            n_estimators: vec![50, 100, 200, 300, 400],
            max_depth: vec![
                DepthLimit::Unlimited,
                DepthLimit::At(5),
                DepthLimit::At(10),
                DepthLimit::At(20),
                DepthLimit::At(30),
            ],
            cv_folds: 5,
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators.is_empty() || self.max_depth.is_empty() {
            return Err(ForestError::EmptyGrid);
        }
        if self.cv_folds < 2 {
            return Err(ForestError::TooFewFolds {
                folds: self.cv_folds,
            });
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<ForestHyperParams> {
        let mut cells = Vec::with_capacity(self.n_estimators.len() * self.max_depth.len());
        for &n_estimators in &self.n_estimators {
            for &max_depth in &self.max_depth {
                cells.push(ForestHyperParams {
                    n_estimators,
                    max_depth,
                    features_per_split: FeatureSubset::Sqrt,
                    bootstrap: true,
                });
            }
        }
        cells
    }
}

/// Deterministic fold assignment: indices are shuffled once from `seed` and
/// cut into `folds` contiguous chunks (the first `n % folds` get one extra).
fn fold_assignments(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Runs k-fold cross-validation for one hyperparameter cell.
pub fn kfold_cv(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    hyperparams: &ForestHyperParams,
    folds: usize,
    seed: u64,
) -> Result<CvReport, ForestError> {
    if folds < 2 {
        return Err(ForestError::TooFewFolds { folds });
    }
    if x.len() < folds {
        return Err(ForestError::TooFewSamples {
            samples: x.len(),
            folds,
        });
    }
    let assignments = fold_assignments(x.len(), folds, seed);
    let mut fold_metrics = Vec::with_capacity(folds);
    for (f, validation) in assignments.iter().enumerate() {
        let in_validation: std::collections::HashSet<usize> = validation.iter().copied().collect();
        let mut train_x = Vec::with_capacity(x.len() - validation.len());
        let mut train_y = Vec::with_capacity(train_x.capacity());
        for i in 0..x.len() {
            if !in_validation.contains(&i) {
                train_x.push(x[i].clone());
                train_y.push(y[i]);
            }
        }
        let forest = fit_forest(
            &train_x,
            &train_y,
            n_classes,
            vec![String::new(); n_classes],
            hyperparams,
            derive_seed(seed, f as u64),
        )?;
        let mut y_true = Vec::with_capacity(validation.len());
        let mut y_pred = Vec::with_capacity(validation.len());
        for &i in validation {
            y_true.push(y[i]);
            y_pred.push(forest.predict(&x[i])?);
        }
        let cm = confusion(&y_true, &y_pred, n_classes).map_err(|e| ForestError::Corrupt {
            reason: e.to_string(),
        })?;
        let s = summary(&cm).map_err(|e| ForestError::Corrupt {
            reason: e.to_string(),
        })?;
        fold_metrics.push(FoldMetrics {
            accuracy: s.accuracy,
            macro_precision: s.macro_precision,
            macro_recall: s.macro_recall,
            macro_f1: s.macro_f1,
        });
    }

    let n = fold_metrics.len() as f64;
    let mut mean = [0.0; 4];
    for m in &fold_metrics {
        for (acc, v) in mean.iter_mut().zip(m.as_array()) {
            *acc += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = [0.0; 4];
    for m in &fold_metrics {
        for (acc, (v, mu)) in std.iter_mut().zip(m.as_array().into_iter().zip(mean)) {
            *acc += (v - mu) * (v - mu);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }

    Ok(CvReport {
        hyperparams: *hyperparams,
        folds: fold_metrics,
        mean: FoldMetrics::from_array(mean),
        std: FoldMetrics::from_array(std),
    })
}

/// Exhaustive grid search by mean CV accuracy.
///
/// Ties break toward the smaller model: fewer trees first, then shallower
/// depth. Every cell uses the same fold assignment.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    grid: &HyperGrid,
    seed: u64,
) -> Result<(ForestHyperParams, Vec<CvReport>), ForestError> {
    grid.validate()?;
    let mut reports = Vec::new();
    for cell in grid.cells() {
        reports.push(kfold_cv(x, y, n_classes, &cell, grid.cv_folds, seed)?);
    }
    let best = reports
        .iter()
        .min_by(|a, b| {
            b.mean
                .accuracy
                .total_cmp(&a.mean.accuracy)
                .then(a.hyperparams.n_estimators.cmp(&b.hyperparams.n_estimators))
                .then(a.hyperparams.max_depth.rank().cmp(&b.hyperparams.max_depth.rank()))
        })
        .expect("grid has at least one cell");
    Ok((best.hyperparams, reports))
}
