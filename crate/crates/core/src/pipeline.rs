//! End-to-end orchestration: data to trained model to explanations,
//! selectivity study and report files.
//!
//! The CLI is a thin layer over this module; everything here is plain Rust
//! data in, deterministic artifact bytes out.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, ClassScheme, DatasetError, LabeledDataset, QualityLabel, SplitManifest, SynthSpec,
};
use crate::forest::{
    fit_forest, grid_search, CvReport, Forest, ForestError, ForestHyperParams, HyperGrid,
};
use crate::metrics::{
    confusion, expert_agreement, summary, AgreementReport, ConfusionMatrix, ExpertRating,
    MetricsError, MetricsSummary,
};
use crate::perturb::{
    enumerate_plans_seeded, run_selectivity, selectivity_report, PerturbError, SelectivityReport,
};
use crate::phases::{
    class_phase_summary, phase_importance, slice, ClassPhaseSummary, PhaseBoundaries, PhaseError,
};
use crate::preprocess::{prepare, FeatureVector, PreprocessConfig, PreprocessError};
use crate::report::{render_svg, RenderSpec, ReportError};
use crate::rng::derive_seed;
use crate::shapley::{explain_batch, Attribution, ClassPolicy, ShapleyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("unknown instance ids {unknown:?}; the dataset has {known} instances")]
    UnknownInstances { unknown: Vec<String>, known: usize },
    #[error("split manifest does not cover the dataset: {reason}")]
    SplitMismatch { reason: String },
}

/// Where the labeled curves come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Files {
        curves_dir: PathBuf,
        labels_file: PathBuf,
    },
    Synth {
        spec: SynthSpec,
        n_per_class: usize,
        seed: u64,
    },
}

/// Grid search or a fixed hyperparameter cell.
#[derive(Debug, Clone)]
pub enum TrainSettings {
    Grid(HyperGrid),
    Fixed(ForestHyperParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainScope {
    Test,
    All,
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub source: DataSource,
    pub preprocess: PreprocessConfig,
    pub class_scheme: ClassScheme,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub train: TrainSettings,
    pub train_seed: u64,
    pub boundaries: PhaseBoundaries,
    pub class_policy: ClassPolicy,
    pub explain_scope: ExplainScope,
    /// Run the 42-model selectivity study with this seed base.
    pub selectivity_seed: Option<u64>,
    /// How many explained instances get an SVG in the report.
    pub svg_sample: usize,
    pub canvas_width: u32,
    pub canvas_height: u32,
}

impl PipelineSettings {
    /// A full synthetic configuration: useful as a template and for tests.
    pub fn synth_default(seed: u64) -> Self {
        Self {
            source: DataSource::Synth {
                spec: SynthSpec::default(),
                n_per_class: 120,
                seed: derive_seed(seed, 1),
            },
            preprocess: PreprocessConfig {
                invert: false,
                window_start: 0,
                window_len: 500,
            },
            class_scheme: ClassScheme::Major,
            split_ratio: 0.8,
            split_seed: derive_seed(seed, 2),
            train: TrainSettings::Fixed(ForestHyperParams {
                n_estimators: 60,
                ..ForestHyperParams::default()
            }),
            train_seed: derive_seed(seed, 3),
            boundaries: PhaseBoundaries::default(),
            class_policy: ClassPolicy::Predicted,
            explain_scope: ExplainScope::Test,
            selectivity_seed: Some(derive_seed(seed, 4)),
            svg_sample: 3,
            canvas_width: 720,
            canvas_height: 420,
        }
    }
}

/// Prepared features with labels, class mapping and the split manifest.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<QualityLabel>,
    pub y: Vec<usize>,
    pub class_names: Vec<String>,
    pub split: SplitManifest,
}

impl PreparedData {
    fn partition(&self, ids: &std::collections::BTreeSet<String>) -> (Vec<FeatureVector>, Vec<usize>, Vec<QualityLabel>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut labels = Vec::new();
        for ((fv, &y), &label) in self
            .features
            .iter()
            .zip(&self.y)
            .zip(self.labels.iter())
        {
            if ids.contains(&fv.id) {
                xs.push(fv.clone());
                ys.push(y);
                labels.push(label);
            }
        }
        (xs, ys, labels)
    }

    pub fn train_partition(&self) -> (Vec<FeatureVector>, Vec<usize>, Vec<QualityLabel>) {
        self.partition(&self.split.train_ids)
    }

    pub fn test_partition(&self) -> (Vec<FeatureVector>, Vec<usize>, Vec<QualityLabel>) {
        self.partition(&self.split.test_ids)
    }

    /// `id,major,sub,v0..v{D-1}` rows in dataset order; values round-trip
    /// bit-exactly.
    pub fn features_csv(&self) -> String {
        let d = self.features.first().map_or(0, |f| f.values.len());
        let mut out = String::from("id,major,sub");
        for i in 0..d {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for (fv, label) in self.features.iter().zip(&self.labels) {
            let sub = label.sub.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}", fv.id, label.major.token(), sub));
            for v in &fv.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn load_source(source: &DataSource) -> Result<LabeledDataset, PipelineError> {
    match source {
        DataSource::Files {
            curves_dir,
            labels_file,
        } => Ok(dataset::load_manifest(curves_dir, labels_file)?),
        DataSource::Synth {
            spec,
            n_per_class,
            seed,
        } => Ok(dataset::synth_generate(spec, *n_per_class, *seed)?.dataset),
    }
}

/// Loads (or generates) the dataset, preprocesses every curve and splits it.
pub fn prepare_data(settings: &PipelineSettings) -> Result<PreparedData, PipelineError> {
    let ds = load_source(&settings.source)?;
    let split = dataset::split(&ds, settings.split_ratio, settings.split_seed)?;
    let mut features = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    let mut y = Vec::with_capacity(ds.len());
    let scheme = settings.class_scheme;
    for (curve, label) in ds.records() {
        features.push(prepare(curve, &settings.preprocess)?);
        labels.push(*label);
        y.push(scheme.index_of(label)?);
    }
    Ok(PreparedData {
        features,
        labels,
        y,
        class_names: scheme.class_names(),
        split,
    })
}

/// Reconstructs `PreparedData` from a features CSV and a split manifest.
pub fn prepared_from_csv(
    csv_text: &str,
    split: SplitManifest,
    scheme: ClassScheme,
) -> Result<PreparedData, PipelineError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut y = Vec::new();
    for (i, line) in csv_text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().unwrap_or_default().to_string();
        let major = parts.next().unwrap_or_default();
        let sub = parts.next().unwrap_or_default();
        let major = crate::dataset::MajorClass::parse(major).ok_or(
            DatasetError::UnknownLabel {
                path: "features.csv".to_string(),
                line: i + 1,
                token: major.to_string(),
            },
        )?;
        let sub = if sub.is_empty() {
            None
        } else {
            Some(sub.parse::<u8>().map_err(|_| DatasetError::UnknownLabel {
                path: "features.csv".to_string(),
                line: i + 1,
                token: sub.to_string(),
            })?)
        };
        let label = QualityLabel::new(major, sub)?;
        let values: Result<Vec<f64>, _> = parts.map(str::parse).collect();
        let values = values.map_err(|_| DatasetError::MalformedRow {
            path: "features.csv".to_string(),
            line: i + 1,
            value: line.to_string(),
        })?;
        y.push(scheme.index_of(&label)?);
        labels.push(label);
        features.push(FeatureVector { id, values });
    }
    let covered: std::collections::BTreeSet<&String> =
        split.train_ids.iter().chain(split.test_ids.iter()).collect();
    for fv in &features {
        if !covered.contains(&fv.id) {
            return Err(PipelineError::SplitMismatch {
                reason: format!("instance {} is in neither partition", fv.id),
            });
        }
    }
    Ok(PreparedData {
        features,
        labels,
        y,
        class_names: scheme.class_names(),
        split,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub forest: Forest,
    pub chosen: ForestHyperParams,
    /// One report per grid cell; a single entry for fixed hyperparameters.
    pub cv_reports: Vec<CvReport>,
}

/// Grid-searches (or takes the fixed cell) on the train partition, then fits
/// the final forest on the full train partition.
pub fn train_model(
    prepared: &PreparedData,
    settings: &PipelineSettings,
) -> Result<TrainedModel, PipelineError> {
    let (train_x, train_y, _) = prepared.train_partition();
    let rows: Vec<Vec<f64>> = train_x.iter().map(|f| f.values.clone()).collect();
    let n_classes = prepared.class_names.len();
    let (chosen, cv_reports) = match &settings.train {
        TrainSettings::Grid(grid) => {
            grid_search(&rows, &train_y, n_classes, grid, settings.train_seed)?
        }
        TrainSettings::Fixed(hp) => (*hp, Vec::new()),
    };
    let forest = fit_forest(
        &rows,
        &train_y,
        n_classes,
        prepared.class_names.clone(),
        &chosen,
        settings.train_seed,
    )?;
    Ok(TrainedModel {
        forest,
        chosen,
        cv_reports,
    })
}

#[derive(Debug, Clone)]
pub struct Explanations {
    pub attributions: Vec<Attribution>,
    /// True label class name per attribution (parallel to `attributions`).
    pub attribution_classes: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsSummary,
    pub phase_summary: ClassPhaseSummary,
    pub agreement: Option<AgreementReport>,
    /// `(file name, svg bytes)` for the sampled instances.
    pub svgs: Vec<(String, String)>,
}

/// Evaluates the model on the chosen scope and explains every instance.
pub fn evaluate_and_explain(
    prepared: &PreparedData,
    model: &TrainedModel,
    settings: &PipelineSettings,
) -> Result<Explanations, PipelineError> {
    let (xs, ys, _labels) = match settings.explain_scope {
        ExplainScope::Test => prepared.test_partition(),
        ExplainScope::All => (
            prepared.features.clone(),
            prepared.y.clone(),
            prepared.labels.clone(),
        ),
    };
    explain_instances(prepared, model, settings, &xs, &ys)
}

/// Core of [`evaluate_and_explain`], reusable for explicit instance subsets.
pub fn explain_instances(
    prepared: &PreparedData,
    model: &TrainedModel,
    settings: &PipelineSettings,
    xs: &[FeatureVector],
    ys: &[usize],
) -> Result<Explanations, PipelineError> {
    let forest = &model.forest;
    let rows: Vec<Vec<f64>> = xs.iter().map(|f| f.values.clone()).collect();
    let y_pred = forest.predict_batch(&rows)?;
    let cm = confusion(ys, &y_pred, forest.n_classes)?;
    let metrics = summary(&cm)?;

    let attributions = explain_batch(forest, xs, settings.class_policy)?;
    // Group by the instance's true class; under the `All` policy each
    // instance contributes one attribution per class.
    let per_instance = match settings.class_policy {
        ClassPolicy::All => forest.n_classes,
        _ => 1,
    };
    let attribution_classes: Vec<String> = ys
        .iter()
        .flat_map(|&y| std::iter::repeat_n(prepared.class_names[y].clone(), per_instance))
        .collect();

    let batch: Vec<(Attribution, String)> = attributions
        .iter()
        .cloned()
        .zip(attribution_classes.iter().cloned())
        .collect();
    let phase_summary = class_phase_summary(&batch, &settings.boundaries, &prepared.class_names)?;

    // Expert agreement for the classes the bundled rating tables cover.
    let ratings = ExpertRating::bundled();
    let rated: Vec<(String, [f64; 4])> = phase_summary
        .rows
        .iter()
        .filter(|row| ratings.iter().any(|r| r.class_name == row.class_name))
        .map(|row| (row.class_name.clone(), row.mean))
        .collect();
    let agreement = if rated.is_empty() {
        None
    } else {
        Some(expert_agreement(&rated, &ratings)?)
    };

    // SVGs for the first `svg_sample` instances in id order.
    let mut sample_order: Vec<usize> = (0..xs.len()).collect();
    sample_order.sort_by(|&a, &b| xs[a].id.cmp(&xs[b].id));
    let mut svgs = Vec::new();
    for &i in sample_order.iter().take(settings.svg_sample) {
        let attribution = &attributions[i * per_instance];
        let slices = slice(attribution, &settings.boundaries)?;
        let importance = phase_importance(&slices, attribution);
        let spec = RenderSpec {
            curve: xs[i].clone(),
            boundaries: settings.boundaries,
            weights: importance.weights,
            predicted: prepared.class_names[y_pred[i]].clone(),
            top_phase: importance.top_phase,
            canvas_width: settings.canvas_width,
            canvas_height: settings.canvas_height,
            ramp: Default::default(),
        };
        svgs.push((format!("svg/{}.svg", xs[i].id), render_svg(&spec)?));
    }

    Ok(Explanations {
        attributions,
        attribution_classes,
        confusion: cm,
        metrics,
        phase_summary,
        agreement,
        svgs,
    })
}

/// Runs the 42-plan selectivity study with the model's training conditions.
pub fn selectivity_study(
    prepared: &PreparedData,
    model: &TrainedModel,
    settings: &PipelineSettings,
    explanations: Option<&Explanations>,
) -> Result<SelectivityReport, PipelineError> {
    let seed_base = settings.selectivity_seed.unwrap_or(0);
    let plans = enumerate_plans_seeded(seed_base);
    let (train_x, train_y, _) = prepared.train_partition();
    let (test_x, test_y, _) = prepared.test_partition();
    let study = run_selectivity(
        &train_x,
        &train_y,
        &test_x,
        &test_y,
        prepared.class_names.len(),
        &model.chosen,
        &settings.boundaries,
        settings.train_seed,
        &plans,
    )?;
    // Overall mean importance per phase, for the consistency verdict.
    let importance = explanations.map(|e| {
        let mut sums = [0.0f64; 4];
        let mut count = 0usize;
        for a in &e.attributions {
            if let Ok(slices) = slice(a, &settings.boundaries) {
                let imp = phase_importance(&slices, a);
                for (sum, v) in sums.iter_mut().zip(imp.importance) {
                    *sum += v;
                }
                count += 1;
            }
        }
        if count > 0 {
            for s in &mut sums {
                *s /= count as f64;
            }
        }
        sums
    });
    Ok(selectivity_report(&study, &settings.boundaries, importance))
}

/// Top-level metrics payload of a run, serialized to `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub class_names: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub hyperparams: ForestHyperParams,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<crate::metrics::ClassMetrics>,
    pub warnings: Vec<String>,
    pub base_accuracy_selectivity: Option<f64>,
}

/// Everything a full run produces, plus the report files ready to write.
#[derive(Debug, Clone)]
pub struct FullRunOutput {
    pub prepared: PreparedData,
    pub model: TrainedModel,
    pub explanations: Explanations,
    pub selectivity: Option<SelectivityReport>,
    pub metrics: RunMetrics,
    /// Relative path -> content for [`crate::report::emit_run_report`].
    pub files: BTreeMap<String, Vec<u8>>,
}

/// Full pipeline: prepare, train, explain, optional selectivity, report files.
///
/// `config_snapshot` is stored verbatim in the report so a run can be
/// re-executed from its own output directory.
pub fn full_run(
    settings: &PipelineSettings,
    config_snapshot: &str,
) -> Result<FullRunOutput, PipelineError> {
    let prepared = prepare_data(settings)?;
    let model = train_model(&prepared, settings)?;
    let explanations = evaluate_and_explain(&prepared, &model, settings)?;
    let selectivity = match settings.selectivity_seed {
        Some(_) => Some(selectivity_study(
            &prepared,
            &model,
            settings,
            Some(&explanations),
        )?),
        None => None,
    };

    let (train_x, ..) = prepared.train_partition();
    let (test_x, ..) = prepared.test_partition();
    let metrics = RunMetrics {
        class_names: prepared.class_names.clone(),
        n_train: train_x.len(),
        n_test: test_x.len(),
        hyperparams: model.chosen,
        accuracy: explanations.metrics.accuracy,
        macro_precision: explanations.metrics.macro_precision,
        macro_recall: explanations.metrics.macro_recall,
        macro_f1: explanations.metrics.macro_f1,
        confusion: explanations.confusion.counts.clone(),
        per_class: explanations.metrics.per_class.clone(),
        warnings: explanations.metrics.warnings.clone(),
        base_accuracy_selectivity: selectivity.as_ref().map(|s| s.base_accuracy),
    };

    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert(
        "metrics.json".to_string(),
        serde_json::to_vec_pretty(&metrics).expect("metrics serialize"),
    );
    files.insert(
        "confusion.txt".to_string(),
        explanations
            .confusion
            .render_text(&prepared.class_names)
            .into_bytes(),
    );
    files.insert(
        "phase_summary.csv".to_string(),
        explanations.phase_summary.to_csv().into_bytes(),
    );
    files.insert(
        "split.json".to_string(),
        serde_json::to_vec_pretty(&prepared.split).expect("split serializes"),
    );
    files.insert(
        "config.snapshot.toml".to_string(),
        config_snapshot.as_bytes().to_vec(),
    );
    if !model.cv_reports.is_empty() {
        files.insert(
            "cv_report.json".to_string(),
            serde_json::to_vec_pretty(&model.cv_reports).expect("cv serializes"),
        );
    }
    if let Some(agreement) = &explanations.agreement {
        files.insert(
            "agreement.json".to_string(),
            serde_json::to_vec_pretty(agreement).expect("agreement serializes"),
        );
    }
    if let Some(report) = &selectivity {
        files.insert("selectivity.csv".to_string(), report.to_csv().into_bytes());
        files.insert(
            "selectivity_tables.txt".to_string(),
            report.render_tables().into_bytes(),
        );
        files.insert(
            "selectivity.json".to_string(),
            serde_json::to_vec_pretty(report).expect("selectivity serializes"),
        );
    }
    for (name, svg) in &explanations.svgs {
        files.insert(name.clone(), svg.as_bytes().to_vec());
    }

    Ok(FullRunOutput {
        prepared,
        model,
        explanations,
        selectivity,
        metrics,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_pipeline_end_to_end() {
        let mut settings = PipelineSettings::synth_default(100);
        // Keep the unit test quick; acceptance exercises the full size.
        if let DataSource::Synth { n_per_class, .. } = &mut settings.source {
            *n_per_class = 40;
        }
        settings.train = TrainSettings::Fixed(ForestHyperParams {
            n_estimators: 30,
            ..ForestHyperParams::default()
        });
        settings.selectivity_seed = None;
        let out = full_run(&settings, "# test").unwrap();
        assert_eq!(out.prepared.features.len(), 120);
        assert_eq!(out.metrics.n_train, 96);
        assert_eq!(out.metrics.n_test, 24);
        assert!(
            out.metrics.accuracy >= 0.9,
            "synthetic accuracy {}",
            out.metrics.accuracy
        );
        assert!(out.files.contains_key("metrics.json"));
        assert!(out.files.contains_key("phase_summary.csv"));
        assert!(out.files.keys().any(|k| k.starts_with("svg/")));
        // Every prepared vector respects the preprocessing contract.
        for fv in &out.prepared.features {
            assert_eq!(fv.values.len(), 500);
            assert!(fv.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn features_csv_round_trips() {
        let mut settings = PipelineSettings::synth_default(7);
        if let DataSource::Synth { n_per_class, .. } = &mut settings.source {
            *n_per_class = 5;
        }
        let prepared = prepare_data(&settings).unwrap();
        let csv = prepared.features_csv();
        let back = prepared_from_csv(&csv, prepared.split.clone(), settings.class_scheme).unwrap();
        assert_eq!(back.features.len(), prepared.features.len());
        for (a, b) in prepared.features.iter().zip(&back.features) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.values, b.values);
        }
        assert_eq!(back.y, prepared.y);
    }
}
