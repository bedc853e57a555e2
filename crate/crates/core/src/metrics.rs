//! Classification metrics and the expert-agreement comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXPERT_RATINGS_FIXTURE: &str = include_str!("../fixtures/expert_ratings.csv");

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("y_true has {true_len} entries but y_pred has {pred_len}")]
    LengthMismatch { true_len: usize, pred_len: usize },
    #[error("label index {label} is outside 0..{n_classes}")]
    UnknownLabel { label: usize, n_classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no expert ratings for class {class}")]
    MissingClassRatings { class: String },
    #[error("malformed expert ratings at line {line}: {reason}")]
    BadRatings { line: usize, reason: String },
}

/// Row-= true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Plain text rendering with class names on both axes.
    pub fn render_text(&self, class_names: &[String]) -> String {
        let width = class_names
            .iter()
            .map(|n| n.len())
            .chain(std::iter::once(9))
            .max()
            .unwrap_or(9);
        let mut out = format!("{:width$} |", "true\\pred");
        for name in class_names {
            out.push_str(&format!(" {name:>width$}"));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:width$} |", class_names[i]));
            for count in row {
                out.push_str(&format!(" {count:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the confusion matrix from parallel label-index slices.
pub fn confusion(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            true_len: y_true.len(),
            pred_len: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes {
            return Err(MetricsError::UnknownLabel {
                label: t,
                n_classes,
            });
        }
        if p >= n_classes {
            return Err(MetricsError::UnknownLabel {
                label: p,
                n_classes,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Classes whose precision or recall hit the 0-for-empty-denominator
    /// convention.
    pub warnings: Vec<String>,
}

/// Accuracy plus macro-averaged precision/recall/F1.
///
/// A class with no predicted (or no true) instances gets precision (recall) 0
/// and a warning, matching the common library convention.
pub fn summary(cm: &ConfusionMatrix) -> Result<MetricsSummary, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = cm.n_classes();
    let mut per_class = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for c in 0..n {
        let tp = cm.counts[c][c] as f64;
        let row_sum: usize = cm.counts[c].iter().sum();
        let col_sum: usize = (0..n).map(|r| cm.counts[r][c]).sum();
        let precision = if col_sum > 0 {
            tp / col_sum as f64
        } else {
            warnings.push(format!("class {c}: no predicted instances, precision set to 0"));
            0.0
        };
        let recall = if row_sum > 0 {
            tp / row_sum as f64
        } else {
            warnings.push(format!("class {c}: no true instances, recall set to 0"));
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: row_sum,
        });
    }
    let macro_mean = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
    };
    Ok(MetricsSummary {
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: macro_mean(|m| m.precision),
        macro_recall: macro_mean(|m| m.recall),
        macro_f1: macro_mean(|m| m.f1),
        per_class,
        warnings,
    })
}

/// One expert's 0..3 impact score per phase for one quality class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRating {
    pub rater: String,
    pub class_name: String,
    pub scores: [u8; 4],
}

impl ExpertRating {
    /// Parses the `rater,class,p1,p2,p3,p4` CSV format.
    pub fn parse_csv(text: &str) -> Result<Vec<ExpertRating>, MetricsError> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("rater")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(MetricsError::BadRatings {
                    line: i + 1,
                    reason: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let mut scores = [0u8; 4];
            for (p, score) in scores.iter_mut().enumerate() {
                *score = fields[2 + p].parse().map_err(|_| MetricsError::BadRatings {
                    line: i + 1,
                    reason: format!("bad score {:?}", fields[2 + p]),
                })?;
                if *score > 3 {
                    return Err(MetricsError::BadRatings {
                        line: i + 1,
                        reason: format!("score {score} is outside 0..=3"),
                    });
                }
            }
            out.push(ExpertRating {
                rater: fields[0].to_string(),
                class_name: fields[1].to_string(),
                scores,
            });
        }
        Ok(out)
    }

    /// The bundled two-expert rating fixture.
    pub fn bundled() -> Vec<ExpertRating> {
        Self::parse_csv(EXPERT_RATINGS_FIXTURE).expect("bundled fixture parses")
    }

    /// 1-based phases sharing the maximal score.
    pub fn top_phases(&self) -> Vec<usize> {
        let max = *self.scores.iter().max().expect("four scores");
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == max)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Spearman rank correlation with average ranks for ties.
///
/// `None` when either input is constant (the correlation is undefined).
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a.sqrt() * var_b.sqrt()))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// How one expert's rating relates to the model's phase importances for a
/// class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RaterAgreement {
    pub rater: String,
    pub expert_top_phases: Vec<usize>,
    /// Whether the model's top phase is among the expert's top phases.
    pub top_phase_match: bool,
    /// Spearman correlation between the model importances and the rating;
    /// `None` when either vector is constant.
    pub rank_correlation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAgreement {
    pub class_name: String,
    pub model_top_phase: usize,
    pub model_importance: [f64; 4],
    pub raters: Vec<RaterAgreement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementReport {
    pub classes: Vec<ClassAgreement>,
}

/// Compares per-class mean phase importances against expert ratings.
///
/// The comparison stays per rater and per class; no aggregate pass/fail is
/// computed.
pub fn expert_agreement(
    class_importances: &[(String, [f64; 4])],
    ratings: &[ExpertRating],
) -> Result<AgreementReport, MetricsError> {
    let mut classes = Vec::new();
    for (class_name, importance) in class_importances {
        let class_ratings: Vec<&ExpertRating> = ratings
            .iter()
            .filter(|r| &r.class_name == class_name)
            .collect();
        if class_ratings.is_empty() {
            return Err(MetricsError::MissingClassRatings {
                class: class_name.clone(),
            });
        }
        let model_top_phase = importance
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.total_cmp(b).then(j.cmp(i)))
            .map(|(i, _)| i + 1)
            .expect("four phases");
        let raters = class_ratings
            .iter()
            .map(|r| {
                let expert_top = r.top_phases();
                let scores: Vec<f64> = r.scores.iter().map(|&s| s as f64).collect();
                RaterAgreement {
                    rater: r.rater.clone(),
                    top_phase_match: expert_top.contains(&model_top_phase),
                    rank_correlation: rank_correlation(importance, &scores),
                    expert_top_phases: expert_top,
                }
            })
            .collect();
        classes.push(ClassAgreement {
            class_name: class_name.clone(),
            model_top_phase,
            model_importance: *importance,
            raters,
        });
    }
    Ok(AgreementReport { classes })
}
