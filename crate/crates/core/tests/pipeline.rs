//! Integration tests across module boundaries and the external file
//! interfaces: curve CSVs, the split manifest, the forest JSON and the
//! attribution export.

use forcesight::dataset::{self, MajorClass, QualityLabel, RawCurve, SynthSpec};
use forcesight::forest::{Forest, ForestHyperParams};
use forcesight::pipeline::{
    self, DataSource, ExplainScope, PipelineSettings, TrainSettings,
};
use forcesight::shapley::{attributions_to_csv, explain_batch, tree_shap, ClassPolicy};

fn small_settings(seed: u64) -> PipelineSettings {
    let mut settings = PipelineSettings::synth_default(seed);
    settings.source = DataSource::Synth {
        spec: SynthSpec::default(),
        n_per_class: 30,
        seed: 5,
    };
    settings.train = TrainSettings::Fixed(ForestHyperParams {
        n_estimators: 20,
        ..ForestHyperParams::default()
    });
    settings.selectivity_seed = None;
    settings
}

#[test]
fn forest_json_supports_explanation_without_retraining() {
    let settings = small_settings(1);
    let prepared = pipeline::prepare_data(&settings).unwrap();
    let model = pipeline::train_model(&prepared, &settings).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.json");
    model.forest.save_json(&path).unwrap();
    let reloaded = Forest::load_json(&path).unwrap();

    let (test_x, ..) = prepared.test_partition();
    for x in test_x.iter().take(5) {
        let class = reloaded.predict(&x.values).unwrap();
        let original = tree_shap(&model.forest, x, class).unwrap();
        let from_disk = tree_shap(&reloaded, x, class).unwrap();
        assert_eq!(original.values, from_disk.values);
        assert_eq!(original.base_value, from_disk.base_value);
    }
}

#[test]
fn attribution_export_covers_the_batch() {
    let settings = small_settings(2);
    let prepared = pipeline::prepare_data(&settings).unwrap();
    let model = pipeline::train_model(&prepared, &settings).unwrap();
    let (test_x, ..) = prepared.test_partition();
    let attributions = explain_batch(&model.forest, &test_x, ClassPolicy::Predicted).unwrap();
    assert_eq!(attributions.len(), test_x.len());
    assert!(attributions.iter().all(|a| a.values.len() == 500));

    let csv = attributions_to_csv(&attributions);
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("id,class_index,base_value,s_0,"));
    assert!(header.ends_with(",s_499"));
    assert_eq!(lines.count(), attributions.len());
}

#[test]
fn split_manifest_round_trips_and_is_reused() {
    let out = dataset::synth_generate(&SynthSpec::default(), 25, 9).unwrap();
    let manifest = dataset::split(&out.dataset, 0.8, 123).unwrap();
    assert_eq!(manifest.train_ids.len(), 60);
    assert_eq!(manifest.test_ids.len(), 15);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    manifest.save(&path).unwrap();
    let reloaded = dataset::SplitManifest::load(&path).unwrap();
    assert_eq!(reloaded, manifest);

    // Same dataset and seed -> identical manifest; different seed -> different.
    let again = dataset::split(&out.dataset, 0.8, 123).unwrap();
    assert_eq!(again, manifest);
    let other = dataset::split(&out.dataset, 0.8, 124).unwrap();
    assert_ne!(other.train_ids, manifest.train_ids);
}

// 1617 records at ratio 0.8 give 1293 train and 324 test curves.
#[test]
fn split_sizes_at_production_scale() {
    let records: Vec<(RawCurve, QualityLabel)> = (0..1617)
        .map(|i| {
            (
                RawCurve::new(format!("c{i:04}"), vec![0.0, 1.0]).unwrap(),
                QualityLabel::ok(),
            )
        })
        .collect();
    let ds = dataset::LabeledDataset::new(records).unwrap();
    let manifest = dataset::split(&ds, 0.8, 7).unwrap();
    assert_eq!(manifest.train_ids.len(), 1293);
    assert_eq!(manifest.test_ids.len(), 324);
}

// Class counts at production scale (805 OK, 515 missing strands split
// 172/292/51, 297 crimped insulation = 1617) flow through ingestion
// unchanged.
#[test]
fn manifest_ingestion_preserves_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let curves_dir = dir.path().join("curves");
    let labels = dir.path().join("labels.csv");
    let mut records = Vec::new();
    let mut make = |major: MajorClass, sub: Option<u8>, n: usize, tag: &str| {
        for k in 0..n {
            records.push((
                RawCurve::new(format!("{tag}{k:03}"), vec![1.0, 2.0, 3.0]).unwrap(),
                QualityLabel::new(major, sub).unwrap(),
            ));
        }
    };
    make(MajorClass::Ok, None, 805, "ok");
    make(MajorClass::MissingStrands, Some(1), 172, "ms1_");
    make(MajorClass::MissingStrands, Some(2), 292, "ms2_");
    make(MajorClass::MissingStrands, Some(3), 51, "ms3_");
    make(MajorClass::CrimpedInsulation, None, 297, "ci");
    let ds = dataset::LabeledDataset::new(records).unwrap();
    dataset::save_dataset(&ds, &curves_dir, &labels).unwrap();

    let loaded = dataset::load_manifest(&curves_dir, &labels).unwrap();
    assert_eq!(loaded.len(), 1617);
    let counts = loaded.class_counts();
    assert_eq!(counts[&MajorClass::Ok], 805);
    assert_eq!(counts[&MajorClass::MissingStrands], 515);
    assert_eq!(counts[&MajorClass::CrimpedInsulation], 297);
    assert_eq!(counts.values().sum::<usize>(), loaded.len());
}

// The prepared curve keeps the characteristic shape: the force peak sits at
// the end of the compression phase and springback drops off sharply.
#[test]
fn prepared_curve_has_rise_then_springback_drop() {
    let settings = small_settings(6);
    let prepared = pipeline::prepare_data(&settings).unwrap();
    let b = settings.boundaries;
    for fv in prepared.features.iter().take(10) {
        let argmax = fv
            .values
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .map(|(i, _)| i)
            .unwrap();
        assert!(
            (b.x2..b.x3 + 5).contains(&argmax),
            "{}: peak at {argmax}, expected late compression",
            fv.id
        );
        // Mean of the springback tail is far below the peak.
        let tail = &fv.values[b.x3 + 50..];
        let tail_mean: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(tail_mean < 0.3, "{}: springback tail mean {tail_mean}", fv.id);
        // Compression rises: the mean of its second half exceeds the first.
        let mid = (b.x2 + b.x3) / 2;
        let first: f64 = fv.values[b.x2..mid].iter().sum::<f64>() / (mid - b.x2) as f64;
        let second: f64 = fv.values[mid..b.x3].iter().sum::<f64>() / (b.x3 - mid) as f64;
        assert!(second > first, "{}: compression does not rise", fv.id);
    }
}

#[test]
fn features_csv_reload_reproduces_the_in_memory_model() {
    let settings = small_settings(3);
    let prepared = pipeline::prepare_data(&settings).unwrap();
    let reloaded = pipeline::prepared_from_csv(
        &prepared.features_csv(),
        prepared.split.clone(),
        settings.class_scheme,
    )
    .unwrap();

    let direct = pipeline::train_model(&prepared, &settings).unwrap();
    let via_disk = pipeline::train_model(&reloaded, &settings).unwrap();
    assert_eq!(
        direct.forest.to_json_string(),
        via_disk.forest.to_json_string()
    );
}

#[test]
fn explain_scope_all_covers_every_instance() {
    let mut settings = small_settings(4);
    settings.explain_scope = ExplainScope::All;
    let prepared = pipeline::prepare_data(&settings).unwrap();
    let model = pipeline::train_model(&prepared, &settings).unwrap();
    let explanations = pipeline::evaluate_and_explain(&prepared, &model, &settings).unwrap();
    assert_eq!(explanations.attributions.len(), prepared.features.len());
    assert_eq!(
        explanations.confusion.total(),
        prepared.features.len()
    );
}
