//! Selectivity study: perturb phase subsets, retrain, compare accuracies.
//!
//! Three replacement strategies (zero-fill, seeded uniform random fill,
//! removal) times the 14 proper non-empty phase subsets of size at most
//! three give 42 retrained models. Both the train and the test partition are
//! perturbed identically; retraining keeps the base model's hyperparameters
//! and seed so the only difference is the manipulated input.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{fit_forest, ForestHyperParams};
use crate::phases::{PhaseBoundaries, PhaseError};
use crate::preprocess::FeatureVector;
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
    #[error("perturbation would remove every feature")]
    NothingLeft,
}

/// How targeted curve points are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementStrategy {
    /// Fill with 0.0.
    Zero,
    /// Fill with i.i.d. uniform draws from [0,1), seeded per plan.
    Random { seed: u64 },
    /// Delete the points, shortening every vector identically.
    Remove,
}

impl ReplacementStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            ReplacementStrategy::Zero => "zero",
            ReplacementStrategy::Random { .. } => "random",
            ReplacementStrategy::Remove => "remove",
        }
    }
}

/// One perturbation: a phase subset (1..=4, size 1..=3) and a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub phases: Vec<usize>,
    pub strategy: ReplacementStrategy,
}

impl PerturbationPlan {
    /// Compact label like `(1,3)`.
    pub fn phases_label(&self) -> String {
        let inner: Vec<String> = self.phases.iter().map(|p| p.to_string()).collect();
        format!("({})", inner.join(","))
    }
}

/// The 14 proper non-empty phase subsets of size 1..=3, ordered by size then
/// lexicographically.
pub fn enumerate_subsets() -> Vec<Vec<usize>> {
    let mut subsets = Vec::with_capacity(14);
    for size in 1..=3usize {
        let mut pick = vec![0usize; size];
        fn rec(start: usize, pick: &mut Vec<usize>, level: usize, out: &mut Vec<Vec<usize>>) {
            if level == pick.len() {
                out.push(pick.clone());
                return;
            }
            for p in start..=4 {
                pick[level] = p;
                rec(p + 1, pick, level + 1, out);
            }
        }
        rec(1, &mut pick, 0, &mut subsets);
    }
    subsets
}

/// All 42 plans: subsets outer (size then lexicographic), strategies inner
/// (zero, random, remove). The random seed of plan number `i` is
/// `derive_seed(random_seed_base, i)`.
pub fn enumerate_plans_seeded(random_seed_base: u64) -> Vec<PerturbationPlan> {
    let mut plans = Vec::with_capacity(42);
    for phases in enumerate_subsets() {
        for strategy_slot in 0..3 {
            let index = plans.len() as u64;
            let strategy = match strategy_slot {
                0 => ReplacementStrategy::Zero,
                1 => ReplacementStrategy::Random {
                    seed: derive_seed(random_seed_base, index),
                },
                _ => ReplacementStrategy::Remove,
            };
            plans.push(PerturbationPlan {
                phases: phases.clone(),
                strategy,
            });
        }
    }
    plans
}

/// [`enumerate_plans_seeded`] with seed base 0.
pub fn enumerate_plans() -> Vec<PerturbationPlan> {
    enumerate_plans_seeded(0)
}

fn target_indices(plan: &PerturbationPlan, b: &PhaseBoundaries) -> Vec<usize> {
    let mut targeted = Vec::new();
    for &phase in &plan.phases {
        targeted.extend(b.phase_range(phase));
    }
    targeted.sort_unstable();
    targeted
}

/// Applies the plan to every vector; untouched indices stay bit-identical.
///
/// The random fill uses one stream seeded from the plan, consumed in
/// instance order, so repeated applications are identical.
pub fn apply_replacement(
    xs: &[FeatureVector],
    plan: &PerturbationPlan,
    b: &PhaseBoundaries,
) -> Result<Vec<FeatureVector>, PerturbError> {
    for x in xs {
        b.validate_len(x.values.len())?;
    }
    let targeted = target_indices(plan, b);
    if targeted.len() == b.x4 && matches!(plan.strategy, ReplacementStrategy::Remove) {
        return Err(PerturbError::NothingLeft);
    }
    let mut rng = match plan.strategy {
        ReplacementStrategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let values = match &plan.strategy {
            ReplacementStrategy::Zero => {
                let mut v = x.values.clone();
                for &i in &targeted {
                    v[i] = 0.0;
                }
                v
            }
            ReplacementStrategy::Random { .. } => {
                let rng = rng.as_mut().expect("random strategy has an rng");
                let mut v = x.values.clone();
                for &i in &targeted {
                    v[i] = rng.gen_range(0.0..1.0);
                }
                v
            }
            ReplacementStrategy::Remove => {
                let mut keep = vec![true; x.values.len()];
                for &i in &targeted {
                    keep[i] = false;
                }
                x.values
                    .iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(v, _)| *v)
                    .collect()
            }
        };
        out.push(FeatureVector {
            id: x.id.clone(),
            values,
        });
    }
    Ok(out)
}

/// Result of one retrained plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectivityResult {
    pub plan: PerturbationPlan,
    pub test_accuracy: f64,
    pub delta_vs_base: f64,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFailure {
    pub plan: PerturbationPlan,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectivityStudy {
    pub base_accuracy: f64,
    pub results: Vec<SelectivityResult>,
    pub failures: Vec<PlanFailure>,
}

fn accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
    let correct = y_true
        .iter()
        .zip(y_pred)
        .filter(|(t, p)| t == p)
        .count();
    correct as f64 / y_true.len() as f64
}

fn rows(xs: &[FeatureVector]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| x.values.clone()).collect()
}

struct TrainedAccuracy {
    accuracy: f64,
    feature_dim: usize,
}

fn train_and_score(
    train_x: &[FeatureVector],
    train_y: &[usize],
    test_x: &[FeatureVector],
    test_y: &[usize],
    n_classes: usize,
    hp: &ForestHyperParams,
    forest_seed: u64,
) -> Result<TrainedAccuracy, PerturbError> {
    let train_rows = rows(train_x);
    let feature_dim = train_rows.first().map_or(0, |r| r.len());
    let forest = fit_forest(
        &train_rows,
        train_y,
        n_classes,
        vec![String::new(); n_classes],
        hp,
        forest_seed,
    )?;
    let test_rows = rows(test_x);
    let y_pred = forest.predict_batch(&test_rows)?;
    Ok(TrainedAccuracy {
        accuracy: accuracy(test_y, &y_pred),
        feature_dim,
    })
}

/// Runs every plan against prepared train/test partitions.
///
/// Each plan perturbs the concatenated train+test set with one stream, then
/// retrains with the base hyperparameters and `forest_seed`. A failing plan
/// is recorded and does not abort the rest. Plans run in parallel;
/// enumeration order is preserved in the output.
#[allow(clippy::too_many_arguments)]
pub fn run_selectivity(
    train_x: &[FeatureVector],
    train_y: &[usize],
    test_x: &[FeatureVector],
    test_y: &[usize],
    n_classes: usize,
    base_hp: &ForestHyperParams,
    b: &PhaseBoundaries,
    forest_seed: u64,
    plans: &[PerturbationPlan],
) -> Result<SelectivityStudy, PerturbError> {
    let base = train_and_score(
        train_x, train_y, test_x, test_y, n_classes, base_hp, forest_seed,
    )?;

    let outcomes: Vec<Result<SelectivityResult, PlanFailure>> = plans
        .par_iter()
        .map(|plan| {
            let run = || -> Result<SelectivityResult, PerturbError> {
                let mut all: Vec<FeatureVector> =
                    Vec::with_capacity(train_x.len() + test_x.len());
                all.extend_from_slice(train_x);
                all.extend_from_slice(test_x);
                let perturbed = apply_replacement(&all, plan, b)?;
                let (p_train, p_test) = perturbed.split_at(train_x.len());
                let scored = train_and_score(
                    p_train, train_y, p_test, test_y, n_classes, base_hp, forest_seed,
                )?;
                Ok(SelectivityResult {
                    plan: plan.clone(),
                    test_accuracy: scored.accuracy,
                    delta_vs_base: scored.accuracy - base.accuracy,
                    feature_dim: scored.feature_dim,
                })
            };
            run().map_err(|e| PlanFailure {
                plan: plan.clone(),
                message: e.to_string(),
            })
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(SelectivityStudy {
        base_accuracy: base.accuracy,
        results,
        failures,
    })
}

/// Consistency between the accuracy-drop ranking and the phase-importance
/// ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectivityVerdict {
    /// All plan accuracies equal the base accuracy.
    NoSelectivePhase,
    /// The phase whose single-phase perturbation hurts most is also the
    /// most important phase.
    Consistent { top_phase: usize },
    Inconsistent {
        drop_top_phase: usize,
        importance_top_phase: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectivityReport {
    pub base_accuracy: f64,
    /// Phase slice lengths, surfaced because the segments are unequal.
    pub slice_lengths: [usize; 4],
    pub results: Vec<SelectivityResult>,
    pub verdict: SelectivityVerdict,
    /// Mean accuracy drop per single-perturbed phase (index 0 = phase 1).
    pub single_phase_drop: [f64; 4],
}

/// Ranks results against the base model and checks agreement with the given
/// per-phase importance values (mean over the explained instances).
pub fn selectivity_report(
    study: &SelectivityStudy,
    b: &PhaseBoundaries,
    phase_importance: Option<[f64; 4]>,
) -> SelectivityReport {
    let mut single_phase_drop = [0.0f64; 4];
    let mut single_phase_n = [0usize; 4];
    for r in &study.results {
        if r.plan.phases.len() == 1 {
            let p = r.plan.phases[0] - 1;
            single_phase_drop[p] += study.base_accuracy - r.test_accuracy;
            single_phase_n[p] += 1;
        }
    }
    for p in 0..4 {
        if single_phase_n[p] > 0 {
            single_phase_drop[p] /= single_phase_n[p] as f64;
        }
    }

    let all_equal = study
        .results
        .iter()
        .all(|r| (r.test_accuracy - study.base_accuracy).abs() < 1e-12);
    let verdict = if all_equal {
        SelectivityVerdict::NoSelectivePhase
    } else {
        let drop_top_phase = (0..4)
            .max_by(|&a, &b| single_phase_drop[a].total_cmp(&single_phase_drop[b]))
            .unwrap()
            + 1;
        match phase_importance {
            Some(importance) => {
                let importance_top_phase = (0..4)
                    .max_by(|&a, &b| importance[a].total_cmp(&importance[b]))
                    .unwrap()
                    + 1;
                if importance_top_phase == drop_top_phase {
                    SelectivityVerdict::Consistent {
                        top_phase: drop_top_phase,
                    }
                } else {
                    SelectivityVerdict::Inconsistent {
                        drop_top_phase,
                        importance_top_phase,
                    }
                }
            }
            None => SelectivityVerdict::Consistent {
                top_phase: drop_top_phase,
            },
        }
    };

    let lengths = b.ranges().map(|r| r.len());
    SelectivityReport {
        base_accuracy: study.base_accuracy,
        slice_lengths: lengths,
        results: study.results.clone(),
        verdict,
        single_phase_drop,
    }
}

impl SelectivityReport {
    /// CSV: `strategy,phases,accuracy,delta_vs_base,feature_dim`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,phases,accuracy,delta_vs_base,feature_dim\n");
        out.push_str(&format!(
            "base,(),{:.6},0.000000,{}\n",
            self.base_accuracy,
            self.slice_lengths.iter().sum::<usize>()
        ));
        for r in &self.results {
            out.push_str(&format!(
                "{},\"{}\",{:.6},{:+.6},{}\n",
                r.plan.strategy.name(),
                r.plan.phases_label(),
                r.test_accuracy,
                r.delta_vs_base,
                r.feature_dim
            ));
        }
        out
    }

    /// Text tables grouped by subset size, one row per strategy.
    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("base accuracy: {:.3}\n", self.base_accuracy));
        for size in 1..=3usize {
            let subsets: Vec<Vec<usize>> = {
                let mut seen = Vec::new();
                for r in &self.results {
                    if r.plan.phases.len() == size && !seen.contains(&r.plan.phases) {
                        seen.push(r.plan.phases.clone());
                    }
                }
                seen
            };
            if subsets.is_empty() {
                continue;
            }
            out.push_str(&format!("\n{size} phase(s) manipulated\n"));
            out.push_str("strategy");
            for s in &subsets {
                let label = PerturbationPlan {
                    phases: s.clone(),
                    strategy: ReplacementStrategy::Zero,
                }
                .phases_label();
                out.push_str(&format!("\t{label}"));
            }
            out.push('\n');
            for strategy in ["zero", "random", "remove"] {
                out.push_str(strategy);
                for s in &subsets {
                    let cell = self
                        .results
                        .iter()
                        .find(|r| r.plan.strategy.name() == strategy && &r.plan.phases == s)
                        .map(|r| format!("{:.3}", r.test_accuracy))
                        .unwrap_or_else(|| "-".to_string());
                    out.push_str(&format!("\t{cell}"));
                }
                out.push('\n');
            }
        }
        out
    }
}
