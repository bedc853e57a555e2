//! Operator-facing SVG rendering and run-report emission.
//!
//! The SVG shows the prepared curve overlaid with four translucent pipe
//! segments, one per phase, filled along a light-yellow to dark-red ramp by
//! normalized phase weight. The predicted class sits above the plot, the
//! most critical phase below it. All layout constants and number formatting
//! are fixed, so identical specs produce byte-identical documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::phases::{PhaseBoundaries, PHASE_NAMES};
use crate::preprocess::FeatureVector;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("canvas {width}x{height} is degenerate")]
    DegenerateCanvas { width: u32, height: u32 },
    #[error("curve length {len} does not match boundaries x4 = {x4}")]
    CurveLengthMismatch { len: usize, x4: usize },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Two-endpoint linear color ramp; monotone in lightness so ordering
/// survives for color-impaired viewers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorRamp {
    pub low: [u8; 3],
    pub high: [u8; 3],
}

impl Default for ColorRamp {
    fn default() -> Self {
        Self {
            low: [255, 255, 178],
            high: [128, 0, 38],
        }
    }
}

impl ColorRamp {
    /// Interpolated color for a weight in [0,1], as `#rrggbb`.
    pub fn color(&self, weight: f64) -> String {
        let w = weight.clamp(0.0, 1.0);
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * w).round() as u8;
        format!(
            "#{:02x}{:02x}{:02x}",
            mix(self.low[0], self.high[0]),
            mix(self.low[1], self.high[1]),
            mix(self.low[2], self.high[2])
        )
    }
}

/// Everything needed to render one explanation figure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderSpec {
    pub curve: FeatureVector,
    pub boundaries: PhaseBoundaries,
    /// Normalized phase weights in [0,1].
    pub weights: [f64; 4],
    pub predicted: String,
    /// 1-based most critical phase.
    pub top_phase: usize,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub ramp: ColorRamp,
}

impl RenderSpec {
    pub fn new(
        curve: FeatureVector,
        boundaries: PhaseBoundaries,
        weights: [f64; 4],
        predicted: impl Into<String>,
        top_phase: usize,
    ) -> Self {
        Self {
            curve,
            boundaries,
            weights,
            predicted: predicted.into(),
            top_phase,
            canvas_width: 720,
            canvas_height: 420,
            ramp: ColorRamp::default(),
        }
    }
}

// Fixed layout constants; changing them changes every rendered byte.
const MARGIN_LEFT: f64 = 40.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;
const BAND_OPACITY: &str = "0.45";

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the explanation figure as a standalone SVG 1.1 document.
pub fn render_svg(spec: &RenderSpec) -> Result<String, ReportError> {
    if spec.canvas_width < 100 || spec.canvas_height < 100 {
        return Err(ReportError::DegenerateCanvas {
            width: spec.canvas_width,
            height: spec.canvas_height,
        });
    }
    let d = spec.curve.values.len();
    if d != spec.boundaries.x4 {
        return Err(ReportError::CurveLengthMismatch {
            len: d,
            x4: spec.boundaries.x4,
        });
    }

    let width = spec.canvas_width as f64;
    let height = spec.canvas_height as f64;
    let plot_w = width - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = height - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |i: f64| MARGIN_LEFT + i / d as f64 * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        spec.canvas_width, spec.canvas_height, spec.canvas_width, spec.canvas_height
    ));
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    // Pipe segments: the band x-extents partition the plot width exactly
    // along the phase index ranges.
    for (p, range) in spec.boundaries.ranges().iter().enumerate() {
        let x0 = x_of(range.start as f64);
        let x1 = x_of(range.end as f64);
        svg.push_str(&format!(
            "<rect class=\"phase-band\" data-phase=\"{}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" fill-opacity=\"{}\"/>\n",
            p + 1,
            x0,
            MARGIN_TOP,
            x1 - x0,
            plot_h,
            spec.ramp.color(spec.weights[p]),
            BAND_OPACITY
        ));
    }

    // Phase separators and labels.
    for (p, range) in spec.boundaries.ranges().iter().enumerate() {
        let x1 = x_of(range.end as f64);
        if p < 3 {
            svg.push_str(&format!(
                "<line x1=\"{x1:.2}\" y1=\"{:.2}\" x2=\"{x1:.2}\" y2=\"{:.2}\" stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
                MARGIN_TOP,
                MARGIN_TOP + plot_h
            ));
        }
        let cx = (x_of(range.start as f64) + x1) / 2.0;
        svg.push_str(&format!(
            "<text x=\"{cx:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\">({})</text>\n",
            MARGIN_TOP + plot_h + 16.0,
            p + 1
        ));
    }

    // The curve itself.
    let mut points = String::new();
    for (i, &v) in spec.curve.values.iter().enumerate() {
        if i > 0 {
            points.push(' ');
        }
        points.push_str(&format!("{:.2},{:.2}", x_of(i as f64 + 0.5), y_of(v)));
    }
    svg.push_str(&format!(
        "<polyline points=\"{points}\" fill=\"none\" stroke=\"#1a1a1a\" stroke-width=\"1.5\"/>\n"
    ));

    // Title: the predicted class.
    svg.push_str(&format!(
        "<text class=\"predicted\" x=\"{:.2}\" y=\"24.00\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\" text-anchor=\"middle\">Predicted: {}</text>\n",
        width / 2.0,
        xml_escape(&spec.predicted)
    ));

    // Caption: the most critical phase.
    let top_name = PHASE_NAMES[spec.top_phase - 1];
    svg.push_str(&format!(
        "<text class=\"top-phase\" x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">Most critical phase: {} ({})</text>\n",
        width / 2.0,
        height - 28.0,
        xml_escape(top_name),
        spec.top_phase
    ));

    // Legend: ramp extremes.
    let legend_y = height - 14.0;
    svg.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\" fill-opacity=\"{}\"/>\n",
        MARGIN_LEFT,
        legend_y - 10.0,
        spec.ramp.color(0.0),
        BAND_OPACITY
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{legend_y:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">low influence</text>\n",
        MARGIN_LEFT + 16.0
    ));
    svg.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\" fill-opacity=\"{}\"/>\n",
        MARGIN_LEFT + 120.0,
        legend_y - 10.0,
        spec.ramp.color(1.0),
        BAND_OPACITY
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{legend_y:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">high influence</text>\n",
        MARGIN_LEFT + 136.0
    ));

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// One file of an emitted run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunIndex {
    pub files: Vec<IndexEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Writes every artifact of a run under `out_dir` and an `index.json`
/// listing relative paths with SHA-256 checksums.
///
/// `files` maps relative path -> content; paths may contain subdirectories.
pub fn emit_run_report(
    out_dir: &Path,
    files: &BTreeMap<String, Vec<u8>>,
) -> Result<RunIndex, ReportError> {
    let io_err = |path: &Path, source: std::io::Error| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (rel, content) in files {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| io_err(&path, e))?;
        entries.push(IndexEntry {
            path: rel.clone(),
            sha256: sha256_hex(content),
            bytes: content.len(),
        });
    }
    let index = RunIndex { files: entries };
    let index_path = out_dir.join("index.json");
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&index_path, json).map_err(|e| io_err(&index_path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with_weights(weights: [f64; 4]) -> RenderSpec {
        let curve = FeatureVector {
            id: "c".to_string(),
            values: (0..500).map(|i| i as f64 / 499.0).collect(),
        };
        RenderSpec::new(
            curve,
            PhaseBoundaries::default(),
            weights,
            "CRIMPED_INSULATION",
            3,
        )
    }

    fn band_fills(svg: &str) -> Vec<String> {
        svg.lines()
            .filter(|l| l.contains("phase-band"))
            .map(|l| {
                let start = l.find("fill=\"#").unwrap() + 6;
                l[start..start + 7].to_string()
            })
            .collect()
    }

    #[test]
    fn hot_band_matches_max_weight() {
        let svg = render_svg(&spec_with_weights([0.0, 0.0, 1.0, 0.0])).unwrap();
        let fills = band_fills(&svg);
        assert_eq!(fills.len(), 4);
        let ramp = ColorRamp::default();
        assert_eq!(fills[2], ramp.color(1.0));
        for p in [0, 1, 3] {
            assert_eq!(fills[p], ramp.color(0.0));
        }
        assert!(svg.contains("Most critical phase: Compression (3)"));
        assert!(svg.contains("Predicted: CRIMPED_INSULATION"));
    }

    #[test]
    fn identical_specs_render_identical_bytes() {
        let spec = spec_with_weights([0.2, 0.9, 0.4, 0.0]);
        assert_eq!(render_svg(&spec).unwrap(), render_svg(&spec).unwrap());
    }

    #[test]
    fn band_extents_partition_plot_width() {
        let svg = render_svg(&spec_with_weights([0.1, 0.2, 0.3, 0.4])).unwrap();
        let mut xs = Vec::new();
        let mut widths = Vec::new();
        for line in svg.lines().filter(|l| l.contains("phase-band")) {
            let grab = |attr: &str| -> f64 {
                let key = format!("{attr}=\"");
                let start = line.find(&key).unwrap() + key.len();
                let end = line[start..].find('"').unwrap() + start;
                line[start..end].parse().unwrap()
            };
            xs.push(grab("x"));
            widths.push(grab("width"));
        }
        for p in 0..3 {
            assert!((xs[p] + widths[p] - xs[p + 1]).abs() < 0.011);
        }
        let total: f64 = widths.iter().sum();
        let plot_w = 720.0 - MARGIN_LEFT - MARGIN_RIGHT;
        assert!((total - plot_w).abs() < 0.05);
    }

    #[test]
    fn ramp_is_monotone_in_weight() {
        let ramp = ColorRamp::default();
        // Lightness proxy: channel sum, strictly decreasing toward the hot end.
        let lightness = |c: String| -> i32 {
            i32::from_str_radix(&c[1..3], 16).unwrap()
                + i32::from_str_radix(&c[3..5], 16).unwrap()
                + i32::from_str_radix(&c[5..7], 16).unwrap()
        };
        let mut last = lightness(ramp.color(0.0));
        for step in 1..=10 {
            let next = lightness(ramp.color(step as f64 / 10.0));
            assert!(next < last, "ramp not monotone at step {step}");
            last = next;
        }
    }

    #[test]
    fn degenerate_canvas_is_rejected() {
        let mut spec = spec_with_weights([0.0; 4]);
        spec.canvas_height = 10;
        assert!(matches!(
            render_svg(&spec),
            Err(ReportError::DegenerateCanvas { .. })
        ));
    }

    #[test]
    fn curve_length_must_match_boundaries() {
        let mut spec = spec_with_weights([0.0; 4]);
        spec.curve.values.truncate(400);
        assert!(matches!(
            render_svg(&spec),
            Err(ReportError::CurveLengthMismatch { len: 400, x4: 500 })
        ));
    }

    #[test]
    fn svg_is_well_formed_xml() {
        let svg = render_svg(&spec_with_weights([0.3, 0.6, 0.9, 0.0])).unwrap();
        // Minimal well-formedness scan: every opened tag closes in order.
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg.as_str();
        while let Some(open) = rest.find('<') {
            rest = &rest[open + 1..];
            let end = rest.find('>').expect("closing angle bracket");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name), "mismatched close");
            } else if !tag.ends_with('/') {
                let name: String = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn run_report_writes_index_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = BTreeMap::new();
        files.insert("metrics.json".to_string(), b"{}".to_vec());
        files.insert("svg/one.svg".to_string(), b"<svg/>".to_vec());
        let index = emit_run_report(dir.path(), &files).unwrap();
        assert_eq!(index.files.len(), 2);
        for entry in &index.files {
            let on_disk = std::fs::read(dir.path().join(&entry.path)).unwrap();
            assert_eq!(on_disk.len(), entry.bytes);
            assert_eq!(entry.sha256.len(), 64);
        }
        assert!(dir.path().join("index.json").exists());

        let empty = emit_run_report(&dir.path().join("sub"), &BTreeMap::new()).unwrap();
        assert!(empty.files.is_empty());
        assert!(dir.path().join("sub/index.json").exists());
    }
}
