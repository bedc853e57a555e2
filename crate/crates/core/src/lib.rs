//! Transparent fault detection for univariate, discrete force curves.
//!
//! The crate covers the full pipeline used for in-line quality control of
//! crimp connections: ingesting labeled force curves, preprocessing them into
//! fixed-length scaled feature vectors, training a from-scratch random forest
//! with cross-validated grid search, attributing each prediction back onto the
//! curve with exact per-point Shapley values, aggregating those attributions
//! into the four physical crimp phases, validating the explanations with a
//! retrain-based perturbation study, and rendering an operator-facing SVG
//! overlay.
//!
//! Everything is seeded explicitly; identical inputs and seeds produce
//! byte-identical outputs regardless of thread count.

pub mod dataset;
pub mod forest;
pub mod metrics;
pub mod phases;
pub mod perturb;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod shapley;

pub use dataset::{LabeledDataset, MajorClass, QualityLabel, RawCurve, SplitManifest};
pub use forest::{DepthLimit, FeatureSubset, Forest, ForestHyperParams, HyperGrid, TreeNode};
pub use phases::{PhaseBoundaries, PhaseImportance, PhaseSlices};
pub use preprocess::{FeatureVector, PreprocessConfig};
pub use shapley::{Attribution, ClassPolicy};
