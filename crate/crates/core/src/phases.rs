//! Slicing of attributions into the four crimp phases and per-phase
//! importance aggregation.
//!
//! A crimp force curve divides into Centring, Rolling in, Compression and
//! Springback. The boundaries are fixed indices into the prepared
//! feature vector; the phase importance is the signed mean of the
//! attribution entries inside each phase, min-max normalized into color
//! weights for the operator view.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shapley::Attribution;

pub const PHASE_NAMES: [&str; 4] = ["Centring", "Rolling in", "Compression", "Springback"];

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("phase boundaries must satisfy 0 < x1 < x2 < x3 < x4, got {x1}, {x2}, {x3}, {x4}")]
    NotIncreasing {
        x1: usize,
        x2: usize,
        x3: usize,
        x4: usize,
    },
    #[error("boundary x4 = {x4} does not match vector length {len}")]
    LengthMismatch { x4: usize, len: usize },
}

/// Phase boundary indices; `x4` must equal the feature-vector length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    pub x1: usize,
    pub x2: usize,
    pub x3: usize,
    pub x4: usize,
}

impl Default for PhaseBoundaries {
    fn default() -> Self {
        Self {
            x1: 75,
            x2: 150,
            x3: 345,
            x4: 500,
        }
    }
}

impl PhaseBoundaries {
    pub fn new(x1: usize, x2: usize, x3: usize, x4: usize) -> Result<Self, PhaseError> {
        if !(0 < x1 && x1 < x2 && x2 < x3 && x3 < x4) {
            return Err(PhaseError::NotIncreasing { x1, x2, x3, x4 });
        }
        Ok(Self { x1, x2, x3, x4 })
    }

    /// The four half-open index ranges `[0,x1) [x1,x2) [x2,x3) [x3,x4)`.
    ///
    /// They partition `0..x4` exactly; no index is double-counted.
    pub fn ranges(&self) -> [Range<usize>; 4] {
        [
            0..self.x1,
            self.x1..self.x2,
            self.x2..self.x3,
            self.x3..self.x4,
        ]
    }

    /// Range of one phase, 1-based phase number.
    pub fn phase_range(&self, phase: usize) -> Range<usize> {
        self.ranges()[phase - 1].clone()
    }

    pub fn validate_len(&self, len: usize) -> Result<(), PhaseError> {
        if self.x4 != len {
            return Err(PhaseError::LengthMismatch { x4: self.x4, len });
        }
        Ok(())
    }
}

/// Attribution values of one instance grouped by phase.
#[derive(Debug, Clone)]
pub struct PhaseSlices {
    pub ranges: [Range<usize>; 4],
    pub values: [Vec<f64>; 4],
}

/// Splits an attribution vector into the four phase slices.
pub fn slice(a: &Attribution, b: &PhaseBoundaries) -> Result<PhaseSlices, PhaseError> {
    b.validate_len(a.values.len())?;
    let ranges = b.ranges();
    let values = ranges
        .clone()
        .map(|range| a.values[range].to_vec());
    Ok(PhaseSlices { ranges, values })
}

/// Per-phase aggregated importance for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseImportance {
    /// Signed mean attribution per phase.
    pub importance: [f64; 4],
    /// Min-max normalized color weights in [0,1]; all 0.5 when the four
    /// importances are equal.
    pub weights: [f64; 4],
    /// 1-based phase with the highest importance (ties go to the lowest).
    pub top_phase: usize,
}

/// Min-max normalizes four values; a constant vector maps to all 0.5.
pub fn normalize_weights(importance: &[f64; 4]) -> [f64; 4] {
    let min = importance.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = importance.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return [0.5; 4];
    }
    let span = max - min;
    [
        (importance[0] - min) / span,
        (importance[1] - min) / span,
        (importance[2] - min) / span,
        (importance[3] - min) / span,
    ]
}

fn argmax_phase(importance: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if importance[i] > importance[best] {
            best = i;
        }
    }
    best + 1
}

/// Computes the signed per-phase means, color weights and the top phase.
pub fn phase_importance(slices: &PhaseSlices, _a: &Attribution) -> PhaseImportance {
    let mut importance = [0.0; 4];
    for (i, vals) in slices.values.iter().enumerate() {
        importance[i] = vals.iter().sum::<f64>() / vals.len() as f64;
    }
    let weights = normalize_weights(&importance);
    PhaseImportance {
        importance,
        weights,
        top_phase: argmax_phase(&importance),
    }
}

/// Per-class phase statistics over a batch of attributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassPhaseRow {
    pub class_name: String,
    pub count: usize,
    /// Mean of I(i) over the class's instances, per phase.
    pub mean: [f64; 4],
    /// Population standard deviation of I(i), per phase.
    pub std: [f64; 4],
    /// 1-based phase with the highest mean.
    pub top_phase: usize,
    /// 1-based phase with the lowest mean.
    pub lowest_phase: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassPhaseSummary {
    pub rows: Vec<ClassPhaseRow>,
    /// Expected classes that had no instances in the batch.
    pub warnings: Vec<String>,
}

impl ClassPhaseSummary {
    pub fn row(&self, class_name: &str) -> Option<&ClassPhaseRow> {
        self.rows.iter().find(|r| r.class_name == class_name)
    }

    /// CSV with one row per phase and a mean/std column pair per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase");
        for row in &self.rows {
            out.push_str(&format!(",{}_mean,{}_std", row.class_name, row.class_name));
        }
        out.push('\n');
        for (phase, name) in PHASE_NAMES.iter().enumerate() {
            out.push_str(&format!("{} ({})", name, phase + 1));
            for row in &self.rows {
                out.push_str(&format!(",{:.6},{:.6}", row.mean[phase], row.std[phase]));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates phase importances per class: mean and population standard
/// deviation of I(i) over each class's instances.
///
/// `expected_classes` that end up empty are listed as warnings instead of
/// producing a row.
pub fn class_phase_summary(
    batch: &[(Attribution, String)],
    b: &PhaseBoundaries,
    expected_classes: &[String],
) -> Result<ClassPhaseSummary, PhaseError> {
    let mut per_class: BTreeMap<&str, Vec<[f64; 4]>> = BTreeMap::new();
    for (attribution, class_name) in batch {
        let slices = slice(attribution, b)?;
        let imp = phase_importance(&slices, attribution);
        per_class
            .entry(class_name.as_str())
            .or_default()
            .push(imp.importance);
    }

    let ordered: Vec<&str> = if expected_classes.is_empty() {
        per_class.keys().cloned().collect()
    } else {
        expected_classes.iter().map(|s| s.as_str()).collect()
    };

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for class_name in ordered {
        let Some(values) = per_class.get(class_name) else {
            warnings.push(format!("class {class_name} has no instances in the batch"));
            continue;
        };
        let n = values.len() as f64;
        let mut mean = [0.0; 4];
        for v in values {
            for p in 0..4 {
                mean[p] += v[p];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = [0.0; 4];
        for v in values {
            for p in 0..4 {
                let d = v[p] - mean[p];
                std[p] += d * d;
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
        }
        let lowest_phase = {
            let mut low = 0;
            for i in 1..4 {
                if mean[i] < mean[low] {
                    low = i;
                }
            }
            low + 1
        };
        rows.push(ClassPhaseRow {
            class_name: class_name.to_string(),
            count: values.len(),
            top_phase: argmax_phase(&mean),
            lowest_phase,
            mean,
            std,
        });
    }
    Ok(ClassPhaseSummary { rows, warnings })
}
