//! Subcommand implementations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use forcesight::dataset::SplitManifest;
use forcesight::forest::Forest;
use forcesight::phases::PHASE_NAMES;
use forcesight::pipeline::{
    self, PipelineSettings, PreparedData, TrainSettings, TrainedModel,
};
use forcesight::report::emit_run_report;
use forcesight::shapley::attributions_to_csv;

use crate::config::RunConfig;
use crate::OutputFormat;

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn load_prepared(out_dir: &Path, config: &RunConfig) -> Result<PreparedData> {
    let features_path = out_dir.join("features.csv");
    let split_path = out_dir.join("split.json");
    if !features_path.is_file() || !split_path.is_file() {
        bail!(
            "missing {} or {}; run `forcesight prepare` first",
            features_path.display(),
            split_path.display()
        );
    }
    let csv_text = std::fs::read_to_string(&features_path)
        .with_context(|| format!("cannot read {}", features_path.display()))?;
    let split = SplitManifest::load(&split_path)?;
    Ok(pipeline::prepared_from_csv(
        &csv_text,
        split,
        config.class_scheme,
    )?)
}

fn load_model(out_dir: &Path, model_override: Option<&PathBuf>) -> Result<TrainedModel> {
    let path = model_override
        .cloned()
        .unwrap_or_else(|| out_dir.join("forest.json"));
    if !path.is_file() {
        bail!(
            "model file {} not found; run `forcesight train` first",
            path.display()
        );
    }
    let forest = Forest::load_json(&path)?;
    let chosen = forest.hyperparams;
    Ok(TrainedModel {
        forest,
        chosen,
        cv_reports: Vec::new(),
    })
}

pub fn cmd_prepare(
    config: &RunConfig,
    settings: &PipelineSettings,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<()> {
    let prepared = pipeline::prepare_data(settings)?;
    write_file(
        &out_dir.join("features.csv"),
        prepared.features_csv().as_bytes(),
    )?;
    prepared.split.save(&out_dir.join("split.json"))?;
    let _ = config;

    let d = prepared.features.first().map_or(0, |f| f.values.len());
    match format {
        OutputFormat::Json => {
            let summary = serde_json::json!({
                "instances": prepared.features.len(),
                "feature_len": d,
                "train": prepared.split.train_ids.len(),
                "test": prepared.split.test_ids.len(),
                "classes": prepared.class_names,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        _ => {
            println!(
                "prepared {} instances of length {} ({} train / {} test) -> {}",
                prepared.features.len(),
                d,
                prepared.split.train_ids.len(),
                prepared.split.test_ids.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

pub fn cmd_train(
    config: &RunConfig,
    settings: &PipelineSettings,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<()> {
    let prepared = load_prepared(out_dir, config)?;
    let model = pipeline::train_model(&prepared, settings)?;
    model.forest.save_json(&out_dir.join("forest.json"))?;
    if !model.cv_reports.is_empty() {
        write_file(
            &out_dir.join("cv_report.json"),
            &serde_json::to_vec_pretty(&model.cv_reports)?,
        )?;
    }

    match format {
        OutputFormat::Json => {
            let summary = serde_json::json!({
                "chosen": model.chosen,
                "cells": model.cv_reports.iter().map(|r| serde_json::json!({
                    "hyperparams": r.hyperparams,
                    "mean_accuracy": r.mean.accuracy,
                    "std_accuracy": r.std.accuracy,
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        OutputFormat::Csv => {
            println!("n_estimators,max_depth,mean_accuracy,std_accuracy");
            for r in &model.cv_reports {
                println!(
                    "{},{},{:.6},{:.6}",
                    r.hyperparams.n_estimators,
                    r.hyperparams.max_depth,
                    r.mean.accuracy,
                    r.std.accuracy
                );
            }
        }
        OutputFormat::Text => {
            if matches!(settings.train, TrainSettings::Grid(_)) {
                println!("grid search over {} cells:", model.cv_reports.len());
                for r in &model.cv_reports {
                    println!(
                        "  n_estimators={:<4} max_depth={:<5} mean_acc={:.4} (+-{:.4})",
                        r.hyperparams.n_estimators,
                        r.hyperparams.max_depth.to_string(),
                        r.mean.accuracy,
                        r.std.accuracy
                    );
                }
            }
            println!(
                "trained forest: n_estimators={} max_depth={} -> {}",
                model.chosen.n_estimators,
                model.chosen.max_depth,
                out_dir.join("forest.json").display()
            );
        }
    }
    Ok(())
}

pub fn cmd_explain(
    config: &RunConfig,
    settings: &PipelineSettings,
    out_dir: &Path,
    model_path: Option<&PathBuf>,
    ids: &[String],
    format: OutputFormat,
) -> Result<()> {
    let prepared = load_prepared(out_dir, config)?;
    let model = load_model(out_dir, model_path)?;

    let explanations = if ids.is_empty() {
        pipeline::evaluate_and_explain(&prepared, &model, settings)?
    } else {
        let wanted: BTreeSet<&String> = ids.iter().collect();
        let known: BTreeSet<&String> = prepared.features.iter().map(|f| &f.id).collect();
        let unknown: Vec<String> = wanted
            .iter()
            .filter(|id| !known.contains(**id))
            .map(|id| (**id).clone())
            .collect();
        if !unknown.is_empty() {
            bail!(
                "unknown instance ids {:?}; the dataset has {} instances",
                unknown,
                known.len()
            );
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (fv, &y) in prepared.features.iter().zip(&prepared.y) {
            if wanted.contains(&fv.id) {
                xs.push(fv.clone());
                ys.push(y);
            }
        }
        pipeline::explain_instances(&prepared, &model, settings, &xs, &ys)?
    };

    write_file(
        &out_dir.join("attributions.csv"),
        attributions_to_csv(&explanations.attributions).as_bytes(),
    )?;
    write_file(
        &out_dir.join("phase_summary.csv"),
        explanations.phase_summary.to_csv().as_bytes(),
    )?;
    write_file(
        &out_dir.join("metrics.json"),
        &serde_json::to_vec_pretty(&explanations.metrics)?,
    )?;
    write_file(
        &out_dir.join("confusion.txt"),
        explanations
            .confusion
            .render_text(&prepared.class_names)
            .as_bytes(),
    )?;
    if let Some(agreement) = &explanations.agreement {
        write_file(
            &out_dir.join("agreement.json"),
            &serde_json::to_vec_pretty(agreement)?,
        )?;
    }
    for (name, svg) in &explanations.svgs {
        write_file(&out_dir.join(name), svg.as_bytes())?;
    }

    match format {
        OutputFormat::Json => {
            let summary = serde_json::json!({
                "attributions": explanations.attributions.len(),
                "accuracy": explanations.metrics.accuracy,
                "macro_f1": explanations.metrics.macro_f1,
                "phase_summary": explanations.phase_summary.rows,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        OutputFormat::Csv => print!("{}", explanations.phase_summary.to_csv()),
        OutputFormat::Text => {
            println!(
                "explained {} attributions (accuracy {:.4}, macro F1 {:.4})",
                explanations.attributions.len(),
                explanations.metrics.accuracy,
                explanations.metrics.macro_f1
            );
            for row in &explanations.phase_summary.rows {
                println!(
                    "  {:<22} top phase {} ({})",
                    row.class_name,
                    row.top_phase,
                    PHASE_NAMES[row.top_phase - 1]
                );
            }
        }
    }
    Ok(())
}

pub fn cmd_selectivity(
    config: &RunConfig,
    settings: &PipelineSettings,
    out_dir: &Path,
    model_path: Option<&PathBuf>,
    strategy: Option<&str>,
    format: OutputFormat,
) -> Result<()> {
    let prepared = load_prepared(out_dir, config)?;
    let model = load_model(out_dir, model_path)?;
    // Retrains reuse the base model's own seed for comparability.
    let mut settings = settings.clone();
    settings.train_seed = model.forest.seed;

    let seed_base = settings.selectivity_seed.unwrap_or(0);
    let mut plans = forcesight::perturb::enumerate_plans_seeded(seed_base);
    if let Some(filter) = strategy {
        plans.retain(|p| p.strategy.name() == filter);
        if plans.is_empty() {
            bail!("strategy filter {filter:?} matches nothing (zero|random|remove)");
        }
    }
    let (train_x, train_y, _) = prepared.train_partition();
    let (test_x, test_y, _) = prepared.test_partition();
    let study = forcesight::perturb::run_selectivity(
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
    let report = forcesight::perturb::selectivity_report(&study, &settings.boundaries, None);

    write_file(&out_dir.join("selectivity.csv"), report.to_csv().as_bytes())?;
    write_file(
        &out_dir.join("selectivity_tables.txt"),
        report.render_tables().as_bytes(),
    )?;
    write_file(
        &out_dir.join("selectivity.json"),
        &serde_json::to_vec_pretty(&report)?,
    )?;

    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputFormat::Csv => print!("{}", report.to_csv()),
        OutputFormat::Text => {
            println!(
                "selectivity study: {} plans, base accuracy {:.4}",
                report.results.len(),
                report.base_accuracy
            );
            print!("{}", report.render_tables());
            if !study.failures.is_empty() {
                println!("failed plans:");
                for failure in &study.failures {
                    println!("  {:?}: {}", failure.plan.phases, failure.message);
                }
            }
        }
    }
    Ok(())
}

pub fn cmd_report(
    settings: &PipelineSettings,
    config_snapshot: &str,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<()> {
    let output = pipeline::full_run(settings, config_snapshot)?;
    let index = emit_run_report(out_dir, &output.files)?;

    match format {
        OutputFormat::Json => {
            let summary = serde_json::json!({
                "out_dir": out_dir,
                "accuracy": output.metrics.accuracy,
                "macro_f1": output.metrics.macro_f1,
                "files": index.files.len(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        _ => {
            println!(
                "report written to {} ({} files, accuracy {:.4}, macro F1 {:.4})",
                out_dir.display(),
                index.files.len(),
                output.metrics.accuracy,
                output.metrics.macro_f1
            );
            for entry in &index.files {
                println!("  {}  {}", &entry.sha256[..12], entry.path);
            }
        }
    }
    Ok(())
}
