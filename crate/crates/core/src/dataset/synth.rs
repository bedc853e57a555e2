//! Synthetic force-curve generator.
//!
//! Produces curves with the characteristic four-phase shape (flat centring,
//! gentle rolling-in rise, steep compression rise to the peak, sharp
//! springback drop) plus a class-specific distortion confined to one phase.
//! The distortion phase is recorded per class so explanation-correctness
//! tests have an unambiguous ground truth.
//!
//! Distortion amplitudes are chosen so they never move the curve's global
//! minimum or maximum: min-max scaling then stays identical across classes
//! and the class signal stays confined to the distorted phase even after
//! preprocessing.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, LabeledDataset, MajorClass, QualityLabel, RawCurve};
use crate::phases::PhaseBoundaries;
use crate::rng::derive_seed;

/// Shape parameters for one synthetic class.
#[derive(Debug, Clone)]
pub struct ClassShapeSpec {
    pub label: QualityLabel,
    /// 1-based phase carrying the class signal; `None` for the undistorted
    /// template (the OK class).
    pub distortion_phase: Option<usize>,
    /// Peak height of the half-sine bump added inside the distortion phase.
    pub distortion_amplitude: f64,
}

/// Generator settings: classes, noise amplitude, phase boundaries.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub classes: Vec<ClassShapeSpec>,
    /// Uniform noise amplitude: each sample gets an i.i.d. draw from
    /// `[-noise, +noise]`, clipped to non-negative afterwards.
    pub noise: f64,
    pub boundaries: PhaseBoundaries,
}

impl SynthSpec {
    /// Three classes (OK plus two faults) whose fault signals both live in
    /// `signal_phase`, with amplitudes picked so the template's global
    /// min/max are untouched.
    pub fn for_signal_phase(signal_phase: usize, noise: f64) -> Self {
        // Amplitudes that never move the template's global extrema (min at
        // index 0, max 1.0 at the compression peak / springback start).
        let (amp_a, amp_b) = match signal_phase {
            1 => (0.06, 0.15),
            2 => (-0.06, 0.30),
            3 => (-0.10, -0.05),
            _ => (0.06, 0.15),
        };
        Self {
            classes: vec![
                ClassShapeSpec {
                    label: QualityLabel::ok(),
                    distortion_phase: None,
                    distortion_amplitude: 0.0,
                },
                ClassShapeSpec {
                    label: QualityLabel {
                        major: MajorClass::MissingStrands,
                        sub: None,
                    },
                    distortion_phase: Some(signal_phase),
                    distortion_amplitude: amp_a,
                },
                ClassShapeSpec {
                    label: QualityLabel {
                        major: MajorClass::CrimpedInsulation,
                        sub: None,
                    },
                    distortion_phase: Some(signal_phase),
                    distortion_amplitude: amp_b,
                },
            ],
            noise,
            boundaries: PhaseBoundaries::default(),
        }
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::for_signal_phase(2, 0.01)
    }
}

/// Generated dataset plus per-class ground-truth signal phase.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: LabeledDataset,
    /// Class display name -> 1-based signal phase (None for OK-like classes).
    pub signal_phase: BTreeMap<String, Option<usize>>,
}

/// The undistorted base curve, one value per index.
pub fn template(b: &PhaseBoundaries) -> Vec<f64> {
    (0..b.x4).map(|i| template_value(i, b)).collect()
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn template_value(i: usize, b: &PhaseBoundaries) -> f64 {
    let frac = |i: usize, lo: usize, hi: usize| (i - lo) as f64 / (hi - lo) as f64;
    if i < b.x1 {
        // Centring: near-zero with a slight drift; global minimum at index 0.
        0.035 * frac(i, 0, b.x1)
    } else if i < b.x2 {
        // Rolling in: gentle rise as the flanks are bent around the strands.
        0.035 + 0.115 * smoothstep(frac(i, b.x1, b.x2))
    } else if i < b.x3 {
        // Compression: steep rise to the force peak at the last phase index.
        let t = (i - b.x2) as f64 / (b.x3 - 1 - b.x2) as f64;
        0.15 + 0.85 * smoothstep(t)
    } else {
        // Springback: rapid drop as the stamp detaches, then a low tail.
        0.05 + 0.95 * (-18.0 * frac(i, b.x3, b.x4)).exp()
    }
}

fn bump(i: usize, lo: usize, hi: usize, amplitude: f64) -> f64 {
    let t = (i - lo) as f64 / (hi - lo) as f64;
    amplitude * (std::f64::consts::PI * t).sin()
}

/// Generates `n_per_class` curves per class with `boundaries.x4` samples each.
pub fn synth_generate(
    spec: &SynthSpec,
    n_per_class: usize,
    seed: u64,
) -> Result<SynthDataset, DatasetError> {
    if n_per_class == 0 {
        return Err(DatasetError::BadSynthSpec {
            reason: "n_per_class must be positive".to_string(),
        });
    }
    if spec.classes.is_empty() {
        return Err(DatasetError::BadSynthSpec {
            reason: "at least one class is required".to_string(),
        });
    }
    if spec.noise < 0.0 {
        return Err(DatasetError::BadSynthSpec {
            reason: format!("noise amplitude {} is negative", spec.noise),
        });
    }
    for class in &spec.classes {
        if let Some(p) = class.distortion_phase {
            if !(1..=4).contains(&p) {
                return Err(DatasetError::BadSynthSpec {
                    reason: format!("distortion phase {p} is outside 1..=4"),
                });
            }
        }
    }

    let base = template(&spec.boundaries);
    let mut records = Vec::with_capacity(spec.classes.len() * n_per_class);
    let mut signal_phase = BTreeMap::new();
    let mut global_index = 0u64;
    for class in &spec.classes {
        let slug = class.label.to_string().to_lowercase().replace(':', "_");
        signal_phase.insert(class.label.to_string(), class.distortion_phase);
        let phase_range = class
            .distortion_phase
            .map(|p| spec.boundaries.phase_range(p));
        for k in 0..n_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, global_index));
            global_index += 1;
            let samples: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let mut value = v;
                    if let Some(range) = &phase_range {
                        if range.contains(&i) {
                            value += bump(i, range.start, range.end, class.distortion_amplitude);
                        }
                    }
                    if spec.noise > 0.0 {
                        value += rng.gen_range(-spec.noise..=spec.noise);
                    }
                    value.max(0.0)
                })
                .collect();
            let mut curve = RawCurve::new(format!("{slug}_{k:04}"), samples)?;
            if let Some(p) = class.distortion_phase {
                curve
                    .source_meta
                    .insert("signal_phase".to_string(), p.to_string());
            }
            records.push((curve, class.label));
        }
    }
    Ok(SynthDataset {
        dataset: LabeledDataset::new(records)?,
        signal_phase,
    })
}
