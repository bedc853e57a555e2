//! Raw curve to model-ready feature vector.
//!
//! The chain is fixed: invert (the force sensor is mounted upside down),
//! zero the baseline, cut the region-of-interest window, min-max scale into
//! [0,1]. Applied in that order the result is deterministic and invariant
//! under positive affine transforms of the raw signal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RawCurve;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("curve {id:?} is empty")]
    EmptyCurve { id: String },
    #[error(
        "window [{start}, {start_plus_len}) exceeds curve {id:?} of length {curve_len}"
    )]
    WindowOutOfBounds {
        id: String,
        start: usize,
        start_plus_len: usize,
        curve_len: usize,
    },
    #[error("window length must be positive")]
    ZeroWindow,
}

/// Per-machine preprocessing settings. The window is supplied explicitly so
/// training and test curves are cut identically; [`propose_window_start`]
/// can suggest a start index for a new setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub invert: bool,
    pub window_start: usize,
    pub window_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            invert: true,
            window_start: 0,
            window_len: 500,
        }
    }
}

/// A preprocessed curve: `window_len` values scaled into [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Negates every sample; involution.
pub fn invert(c: &RawCurve) -> RawCurve {
    RawCurve {
        id: c.id.clone(),
        samples: c.samples.iter().map(|v| -v).collect(),
        source_meta: c.source_meta.clone(),
    }
}

/// Subtracts the curve minimum so the smallest sample becomes exactly 0.
pub fn zero_baseline(c: &RawCurve) -> Result<RawCurve, PreprocessError> {
    let min = c
        .samples
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(PreprocessError::EmptyCurve { id: c.id.clone() });
    }
    Ok(RawCurve {
        id: c.id.clone(),
        samples: c.samples.iter().map(|v| v - min).collect(),
        source_meta: c.source_meta.clone(),
    })
}

/// Cuts the region-of-interest window `[window_start, window_start + window_len)`.
pub fn window(c: &RawCurve, cfg: &PreprocessConfig) -> Result<RawCurve, PreprocessError> {
    if cfg.window_len == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    let end = cfg.window_start + cfg.window_len;
    if end > c.samples.len() {
        return Err(PreprocessError::WindowOutOfBounds {
            id: c.id.clone(),
            start: cfg.window_start,
            start_plus_len: end,
            curve_len: c.samples.len(),
        });
    }
    Ok(RawCurve {
        id: c.id.clone(),
        samples: c.samples[cfg.window_start..end].to_vec(),
        source_meta: c.source_meta.clone(),
    })
}

/// Linearly scales into [0,1]; a constant curve maps to all zeros so flat
/// (physically meaningless) signals don't abort batch jobs.
pub fn minmax_scale(c: &RawCurve) -> Result<FeatureVector, PreprocessError> {
    if c.samples.is_empty() {
        return Err(PreprocessError::EmptyCurve { id: c.id.clone() });
    }
    let min = c.samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = c.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let values = if max == min {
        vec![0.0; c.samples.len()]
    } else {
        let span = max - min;
        c.samples.iter().map(|v| (v - min) / span).collect()
    };
    Ok(FeatureVector {
        id: c.id.clone(),
        values,
    })
}

/// Full chain: invert -> zero baseline -> window -> min-max scale.
pub fn prepare(c: &RawCurve, cfg: &PreprocessConfig) -> Result<FeatureVector, PreprocessError> {
    let inverted;
    let oriented = if cfg.invert {
        inverted = invert(c);
        &inverted
    } else {
        c
    };
    let baselined = zero_baseline(oriented)?;
    let windowed = window(&baselined, cfg)?;
    minmax_scale(&windowed)
}

/// Proposes a window start for a new machine setup: the first index where
/// the baselined force exceeds `threshold_frac` of the curve maximum for
/// `run_len` consecutive samples. Defaults elsewhere: 2% and 5 samples.
pub fn propose_window_start(c: &RawCurve, threshold_frac: f64, run_len: usize) -> Option<usize> {
    let baselined = zero_baseline(c).ok()?;
    let max = baselined
        .samples
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return None;
    }
    let threshold = threshold_frac * max;
    let run_len = run_len.max(1);
    let mut run = 0usize;
    for (i, &v) in baselined.samples.iter().enumerate() {
        if v > threshold {
            run += 1;
            if run == run_len {
                return Some(i + 1 - run_len);
            }
        } else {
            run = 0;
        }
    }
    None
}
