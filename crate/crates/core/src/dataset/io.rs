//! File ingestion and persistence.
//!
//! Curve files are UTF-8 CSV with one numeric force value per line and an
//! optional single header line `force`. The labels file is a CSV with header
//! `id,major,sub`. Saving and re-loading round-trips bit-exactly: values are
//! written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{DatasetError, LabeledDataset, MajorClass, QualityLabel, RawCurve};

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a single force curve. The id is the filename stem.
pub fn load_curve(path: &Path) -> Result<RawCurve, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut samples = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line.eq_ignore_ascii_case("force") {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| DatasetError::MalformedRow {
            path: path.display().to_string(),
            line: idx + 1,
            value: line.to_string(),
        })?;
        if !value.is_finite() {
            return Err(DatasetError::MalformedRow {
                path: path.display().to_string(),
                line: idx + 1,
                value: line.to_string(),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(DatasetError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    RawCurve::new(id, samples)
}

/// Writes a curve in the one-value-per-line schema with a `force` header.
pub fn save_curve(curve: &RawCurve, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::with_capacity(curve.samples.len() * 8 + 8);
    out.push_str("force\n");
    for v in &curve.samples {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn parse_label(
    major: &str,
    sub: &str,
    path: &Path,
    line: usize,
) -> Result<QualityLabel, DatasetError> {
    let unknown = |token: &str| DatasetError::UnknownLabel {
        path: path.display().to_string(),
        line,
        token: token.to_string(),
    };
    let major_class = MajorClass::parse(major.trim()).ok_or_else(|| unknown(major))?;
    let sub = sub.trim();
    let sub_val = if sub.is_empty() {
        None
    } else {
        Some(sub.parse::<u8>().map_err(|_| unknown(sub))?)
    };
    QualityLabel::new(major_class, sub_val).map_err(|_| unknown(sub))
}

/// Reads the labels file: header `id,major,sub`, one row per curve id.
fn load_labels(path: &Path) -> Result<BTreeMap<String, QualityLabel>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
    let mut labels = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // one header line
        let record = record.map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        let major = record.get(1).unwrap_or("");
        let sub = record.get(2).unwrap_or("");
        let label = parse_label(major, sub, path, line)?;
        if labels.insert(id.clone(), label).is_some() {
            return Err(DatasetError::DuplicateId { id });
        }
    }
    Ok(labels)
}

/// Loads every `*.csv` curve in `dir` and joins it with the labels file.
///
/// Curves without a label entry are an error listing their ids; label entries
/// without a curve file are ignored.
pub fn load_manifest(dir: &Path, labels_path: &Path) -> Result<LabeledDataset, DatasetError> {
    let labels = load_labels(labels_path)?;
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();

    let mut records = Vec::with_capacity(paths.len());
    let mut unlabeled = Vec::new();
    for path in &paths {
        let curve = load_curve(path)?;
        match labels.get(&curve.id) {
            Some(label) => records.push((curve, *label)),
            None => unlabeled.push(curve.id),
        }
    }
    if !unlabeled.is_empty() {
        return Err(DatasetError::MissingLabels { ids: unlabeled });
    }
    LabeledDataset::new(records)
}

/// Persists a dataset as one curve file per record plus a labels file.
pub fn save_dataset(
    ds: &LabeledDataset,
    dir: &Path,
    labels_path: &Path,
) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let file = std::fs::File::create(labels_path).map_err(|e| io_err(labels_path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(writer, "id,major,sub").map_err(|e| io_err(labels_path, e))?;
    for (curve, label) in ds.records() {
        save_curve(curve, &dir.join(format!("{}.csv", curve.id)))?;
        let sub = label.sub.map(|s| s.to_string()).unwrap_or_default();
        writeln!(writer, "{},{},{}", curve.id, label.major.token(), sub)
            .map_err(|e| io_err(labels_path, e))?;
    }
    writer.flush().map_err(|e| io_err(labels_path, e))
}
