//! Declarative run configuration (TOML).
//!
//! One config file describes a whole run; command-line flags override single
//! fields. Every seed is explicit or derived from the global `seed`, never
//! from the clock. The full grammar is documented in the repository README.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use forcesight::dataset::{ClassScheme, SynthSpec};
use forcesight::forest::{DepthLimit, FeatureSubset, ForestHyperParams, HyperGrid};
use forcesight::phases::PhaseBoundaries;
use forcesight::pipeline::{DataSource, ExplainScope, PipelineSettings, TrainSettings};
use forcesight::preprocess::PreprocessConfig;
use forcesight::rng::derive_seed;
use forcesight::shapley::ClassPolicy;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; per-stage seeds default to values derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_class_scheme")]
    pub class_scheme: ClassScheme,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub phases: PhasesSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub selectivity: SelectivitySection,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_class_scheme() -> ClassScheme {
    ClassScheme::Major
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub curves_dir: PathBuf,
    pub labels_file: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_per_class: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_signal_phase")]
    pub signal_phase: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_noise() -> f64 {
    0.01
}

fn default_signal_phase() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub invert: bool,
    pub window_start: usize,
    pub window_len: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            invert: true,
            window_start: 0,
            window_len: 500,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratio: f64,
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: Option<u64>,
    pub grid: Option<GridSection>,
    pub fixed: Option<FixedSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<DepthLimit>,
    pub cv_folds: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let grid = HyperGrid::default();
        Self {
            n_estimators: grid.n_estimators,
            max_depth: grid.max_depth,
            cv_folds: grid.cv_folds,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSection {
    pub n_estimators: usize,
    #[serde(default = "default_depth")]
    pub max_depth: DepthLimit,
    #[serde(default = "default_features")]
    pub features_per_split: FeatureSubset,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

fn default_depth() -> DepthLimit {
    DepthLimit::Unlimited
}

fn default_features() -> FeatureSubset {
    FeatureSubset::Sqrt
}

fn default_bootstrap() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasesSection {
    pub x1: usize,
    pub x2: usize,
    pub x3: usize,
    pub x4: usize,
}

impl Default for PhasesSection {
    fn default() -> Self {
        let b = PhaseBoundaries::default();
        Self {
            x1: b.x1,
            x2: b.x2,
            x3: b.x3,
            x4: b.x4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    /// "predicted", "all", or a class index.
    pub policy: PolicyField,
    pub scope: ExplainScope,
    pub svg_sample: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            policy: PolicyField::Name("predicted".to_string()),
            scope: ExplainScope::Test,
            svg_sample: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PolicyField {
    Index(usize),
    Name(String),
}

impl PolicyField {
    pub fn to_policy(&self) -> Result<ClassPolicy> {
        match self {
            PolicyField::Index(i) => Ok(ClassPolicy::Fixed(*i)),
            PolicyField::Name(name) => match name.as_str() {
                "predicted" => Ok(ClassPolicy::Predicted),
                "all" => Ok(ClassPolicy::All),
                other => bail!("explain.policy must be \"predicted\", \"all\" or a class index, got {other:?}"),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectivitySection {
    pub enabled: bool,
    pub seed: Option<u64>,
}

impl Default for SelectivitySection {
    fn default() -> Self {
        Self {
            enabled: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub canvas_width: u32,
    pub canvas_height: u32,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            canvas_width: 720,
            canvas_height: 420,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok((config, text))
    }

    /// Validates the config and lowers it into pipeline settings.
    pub fn to_settings(&self) -> Result<PipelineSettings> {
        let source = match (&self.data, &self.synth) {
            (Some(_), Some(_)) => bail!("config has both [data] and [synth]; pick one"),
            (None, None) => bail!("config needs a [data] or [synth] section"),
            (Some(data), None) => {
                if !data.curves_dir.is_dir() {
                    bail!("data.curves_dir {} is not a directory", data.curves_dir.display());
                }
                if !data.labels_file.is_file() {
                    bail!("data.labels_file {} does not exist", data.labels_file.display());
                }
                DataSource::Files {
                    curves_dir: data.curves_dir.clone(),
                    labels_file: data.labels_file.clone(),
                }
            }
            (None, Some(synth)) => {
                let spec = SynthSpec::for_signal_phase(synth.signal_phase, synth.noise);
                DataSource::Synth {
                    spec,
                    n_per_class: synth.n_per_class,
                    seed: synth.seed.unwrap_or_else(|| derive_seed(self.seed, 1)),
                }
            }
        };
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            bail!("split.ratio {} must be in (0, 1)", self.split.ratio);
        }
        let boundaries =
            PhaseBoundaries::new(self.phases.x1, self.phases.x2, self.phases.x3, self.phases.x4)?;
        if boundaries.x4 != self.preprocess.window_len {
            bail!(
                "phases.x4 = {} must equal preprocess.window_len = {}",
                boundaries.x4,
                self.preprocess.window_len
            );
        }
        let train = match (&self.train.grid, &self.train.fixed) {
            (Some(_), Some(_)) => bail!("config has both [train.grid] and [train.fixed]; pick one"),
            (None, Some(fixed)) => TrainSettings::Fixed(ForestHyperParams {
                n_estimators: fixed.n_estimators,
                max_depth: fixed.max_depth,
                features_per_split: fixed.features_per_split,
                bootstrap: fixed.bootstrap,
            }),
            (grid, None) => {
                let section = grid.clone().unwrap_or_default();
                TrainSettings::Grid(HyperGrid {
                    n_estimators: section.n_estimators,
                    max_depth: section.max_depth,
                    cv_folds: section.cv_folds,
                })
            }
        };
        Ok(PipelineSettings {
            source,
            preprocess: PreprocessConfig {
                invert: self.preprocess.invert,
                window_start: self.preprocess.window_start,
                window_len: self.preprocess.window_len,
            },
            class_scheme: self.class_scheme,
            split_ratio: self.split.ratio,
            split_seed: self.split.seed.unwrap_or_else(|| derive_seed(self.seed, 2)),
            train,
            train_seed: self.train.seed.unwrap_or_else(|| derive_seed(self.seed, 3)),
            boundaries,
            class_policy: self.explain.policy.to_policy()?,
            explain_scope: self.explain.scope,
            selectivity_seed: self
                .selectivity
                .enabled
                .then(|| self.selectivity.seed.unwrap_or_else(|| derive_seed(self.seed, 4))),
            svg_sample: self.explain.svg_sample,
            canvas_width: self.report.canvas_width,
            canvas_height: self.report.canvas_height,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synth_config_parses() {
        let text = r#"
seed = 42
out_dir = "runs/demo"

[synth]
n_per_class = 50
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        let settings = config.to_settings().unwrap();
        assert!(matches!(settings.source, DataSource::Synth { .. }));
        assert!(matches!(settings.train, TrainSettings::Grid(_)));
        assert_eq!(settings.boundaries, PhaseBoundaries::default());
    }

    #[test]
    fn mixed_depth_array_parses() {
        let text = r#"
seed = 1
out_dir = "o"

[synth]
n_per_class = 10

[train.grid]
n_estimators = [50, 100]
max_depth = ["none", 5, 10]
cv_folds = 3
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        match config.to_settings().unwrap().train {
            TrainSettings::Grid(grid) => {
                assert_eq!(grid.max_depth[0], DepthLimit::Unlimited);
                assert_eq!(grid.max_depth[1], DepthLimit::At(5));
            }
            _ => panic!("expected grid"),
        }
    }

    #[test]
    fn conflicting_sections_rejected() {
        let text = r#"
seed = 1
out_dir = "o"

[data]
curves_dir = "/nonexistent"
labels_file = "/nonexistent/labels.csv"

[synth]
n_per_class = 10
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert!(config.to_settings().is_err());
    }

    #[test]
    fn missing_source_rejected() {
        let config: RunConfig = toml::from_str("seed = 1\nout_dir = \"o\"\n").unwrap();
        let err = config.to_settings().unwrap_err().to_string();
        assert!(err.contains("[data] or [synth]"));
    }

    #[test]
    fn window_and_phase_lengths_must_agree() {
        let text = r#"
seed = 1
out_dir = "o"

[synth]
n_per_class = 10

[preprocess]
invert = false
window_start = 0
window_len = 400
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        let err = config.to_settings().unwrap_err().to_string();
        assert!(err.contains("window_len"));
    }

    #[test]
    fn policy_field_variants() {
        assert!(matches!(
            PolicyField::Name("predicted".into()).to_policy().unwrap(),
            ClassPolicy::Predicted
        ));
        assert!(matches!(
            PolicyField::Name("all".into()).to_policy().unwrap(),
            ClassPolicy::All
        ));
        assert!(matches!(
            PolicyField::Index(2).to_policy().unwrap(),
            ClassPolicy::Fixed(2)
        ));
        assert!(PolicyField::Name("bogus".into()).to_policy().is_err());
    }
}
