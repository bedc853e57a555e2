//! Labeled force-curve datasets: domain types, train/test splitting, file
//! ingestion and a synthetic generator for pipeline tests.

mod io;
mod synth;

pub use io::{load_curve, load_manifest, save_curve, save_dataset};
pub use synth::{synth_generate, ClassShapeSpec, SynthDataset, SynthSpec};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed force value {value:?}")]
    MalformedRow {
        path: String,
        line: usize,
        value: String,
    },
    #[error("{path}: file contains no force values")]
    EmptyFile { path: String },
    #[error("curve {id:?} has no samples")]
    EmptyCurve { id: String },
    #[error("curve {id:?} contains a non-finite sample at index {index}")]
    NonFiniteSample { id: String, index: usize },
    #[error("duplicate curve id {id:?}")]
    DuplicateId { id: String },
    #[error("{path}:{line}: unknown label token {token:?}")]
    UnknownLabel {
        path: String,
        line: usize,
        token: String,
    },
    #[error("sub-class {sub} is only valid for MISSING_STRANDS (must be 1..=3)")]
    InvalidSubClass { sub: u8 },
    #[error("curves without a label entry: {}", ids.join(", "))]
    MissingLabels { ids: Vec<String> },
    #[error("split ratio {ratio} is outside (0, 1)")]
    BadSplitRatio { ratio: f64 },
    #[error("dataset has {len} records; at least 2 are required")]
    TooFewRecords { len: usize },
    #[error("synthetic generator: {reason}")]
    BadSynthSpec { reason: String },
    #[error("label {label:?} cannot be mapped in the {scheme:?} class scheme: {reason}")]
    UnmappableLabel {
        label: String,
        scheme: ClassScheme,
        reason: String,
    },
    #[error("malformed split manifest {path}: {reason}")]
    BadManifest { path: String, reason: String },
}

/// One as-recorded force curve: an ordered sequence of signed sensor readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCurve {
    pub id: String,
    pub samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_meta: BTreeMap<String, String>,
}

impl RawCurve {
    /// Validates that the curve is non-empty and finite-valued.
    pub fn new(id: impl Into<String>, samples: Vec<f64>) -> Result<Self, DatasetError> {
        let id = id.into();
        if samples.is_empty() {
            return Err(DatasetError::EmptyCurve { id });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFiniteSample { id, index });
        }
        Ok(Self {
            id,
            samples,
            source_meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The three major quality classes of a crimp connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MajorClass {
    Ok,
    MissingStrands,
    CrimpedInsulation,
}

impl MajorClass {
    pub const ALL: [MajorClass; 3] = [
        MajorClass::Ok,
        MajorClass::MissingStrands,
        MajorClass::CrimpedInsulation,
    ];

    /// Token used in label files and exports.
    pub fn token(&self) -> &'static str {
        match self {
            MajorClass::Ok => "OK",
            MajorClass::MissingStrands => "MISSING_STRANDS",
            MajorClass::CrimpedInsulation => "CRIMPED_INSULATION",
        }
    }

    pub fn parse(token: &str) -> Option<MajorClass> {
        match token {
            "OK" => Some(MajorClass::Ok),
            "MISSING_STRANDS" => Some(MajorClass::MissingStrands),
            "CRIMPED_INSULATION" => Some(MajorClass::CrimpedInsulation),
            _ => None,
        }
    }
}

impl std::fmt::Display for MajorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Quality label: a major class plus, for missing strands, how many strands
/// were cut (1..=3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QualityLabel {
    pub major: MajorClass,
    pub sub: Option<u8>,
}

impl QualityLabel {
    pub fn new(major: MajorClass, sub: Option<u8>) -> Result<Self, DatasetError> {
        match (major, sub) {
            (MajorClass::MissingStrands, Some(s)) if (1..=3).contains(&s) => {
                Ok(Self { major, sub })
            }
            (MajorClass::MissingStrands, Some(s)) => Err(DatasetError::InvalidSubClass { sub: s }),
            (_, Some(s)) if major != MajorClass::MissingStrands => {
                Err(DatasetError::InvalidSubClass { sub: s })
            }
            _ => Ok(Self { major, sub }),
        }
    }

    pub fn ok() -> Self {
        Self {
            major: MajorClass::Ok,
            sub: None,
        }
    }
}

impl std::fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.sub {
            Some(s) => write!(f, "{}:{}", self.major, s),
            None => write!(f, "{}", self.major),
        }
    }
}

/// How labels map onto classifier indices.
///
/// `Major` folds the missing-strand sub-classes into one class (3 classes
/// total); `Expanded` keeps them separate (5 classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScheme {
    Major,
    Expanded,
}

impl ClassScheme {
    pub fn class_names(&self) -> Vec<String> {
        match self {
            ClassScheme::Major => vec![
                "OK".to_string(),
                "MISSING_STRANDS".to_string(),
                "CRIMPED_INSULATION".to_string(),
            ],
            ClassScheme::Expanded => vec![
                "OK".to_string(),
                "MISSING_STRANDS_1".to_string(),
                "MISSING_STRANDS_2".to_string(),
                "MISSING_STRANDS_3".to_string(),
                "CRIMPED_INSULATION".to_string(),
            ],
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ClassScheme::Major => 3,
            ClassScheme::Expanded => 5,
        }
    }

    /// Maps a label to its class index under this scheme.
    pub fn index_of(&self, label: &QualityLabel) -> Result<usize, DatasetError> {
        match self {
            ClassScheme::Major => Ok(match label.major {
                MajorClass::Ok => 0,
                MajorClass::MissingStrands => 1,
                MajorClass::CrimpedInsulation => 2,
            }),
            ClassScheme::Expanded => match (label.major, label.sub) {
                (MajorClass::Ok, _) => Ok(0),
                (MajorClass::MissingStrands, Some(s)) => Ok(s as usize),
                (MajorClass::MissingStrands, None) => Err(DatasetError::UnmappableLabel {
                    label: label.major.token().to_string(),
                    scheme: *self,
                    reason: "missing strand count required in expanded scheme".to_string(),
                }),
                (MajorClass::CrimpedInsulation, _) => Ok(4),
            },
        }
    }
}

/// An immutable collection of labeled curves with unique ids.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    records: Vec<(RawCurve, QualityLabel)>,
}

impl LabeledDataset {
    pub fn new(records: Vec<(RawCurve, QualityLabel)>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for (curve, _) in &records {
            if !seen.insert(curve.id.clone()) {
                return Err(DatasetError::DuplicateId {
                    id: curve.id.clone(),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[(RawCurve, QualityLabel)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&(RawCurve, QualityLabel)> {
        self.records.iter().find(|(c, _)| c.id == id)
    }

    /// Record count per major class; the values sum to `len()`.
    pub fn class_counts(&self) -> BTreeMap<MajorClass, usize> {
        let mut counts = BTreeMap::new();
        for (_, label) in &self.records {
            *counts.entry(label.major).or_insert(0) += 1;
        }
        counts
    }
}

/// Persisted record of one train/test split so every downstream run can reuse
/// the exact same partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

impl SplitManifest {
    pub fn save(&self, path: &std::path::Path) -> Result<(), DatasetError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| DatasetError::BadManifest {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Uniform random train/test split, deterministic for a fixed seed.
///
/// `|train| = floor(ratio * N)`, clamped so both partitions stay non-empty.
pub fn split(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<SplitManifest, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadSplitRatio { ratio });
    }
    if ds.len() < 2 {
        return Err(DatasetError::TooFewRecords { len: ds.len() });
    }
    let mut ids: Vec<&str> = ds.records().iter().map(|(c, _)| c.id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((ratio * ds.len() as f64).floor() as usize).clamp(1, ds.len() - 1);
    let train_ids: BTreeSet<String> = ids[..n_train].iter().map(|s| s.to_string()).collect();
    let test_ids: BTreeSet<String> = ids[n_train..].iter().map(|s| s.to_string()).collect();
    Ok(SplitManifest {
        seed,
        ratio,
        train_ids,
        test_ids,
    })
}
