//! Pipeline driver for `densitylens`: configuration, stage orchestration,
//! intermediate artifacts and the run manifest.
//!
//! Stages run in order ingest, filter, train, classify, sentiment,
//! aggregate, stats, pls, and each one reads the artifacts of the previous
//! stages from the output directory, so any stage can be rerun on its own.

pub mod artifact;
pub mod config;
pub mod curate;
pub mod manifest;
pub mod report;
pub mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::config::RunConfig;
use crate::manifest::{RunManifest, StageRecord, TIMINGS_FILE};
use crate::stages::Context;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or missing inputs, detected before any stage runs.
    #[error("{0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { .. } => 2,
        }
    }
}

pub type StageFn = fn(&Context) -> anyhow::Result<StageRecord>;

/// A stage subcommand by name.
pub fn stage_fn(name: &str) -> Option<StageFn> {
    Some(match name {
        "ingest" => stages::ingest,
        "filter" => stages::filter,
        "train" => stages::train_stage,
        "classify" => stages::classify_stage,
        "sentiment" => stages::sentiment,
        "aggregate" => stages::aggregate,
        "stats" => stages::stats,
        "lsva" => stages::lsva_stage,
        "pls" => stages::pls,
        _ => return None,
    })
}

/// Stages executed by a full run for `config`.
pub fn pipeline_stages(config: &RunConfig) -> Vec<&'static str> {
    let external = matches!(config.classify.kind(), Ok(None));
    let mut names = vec!["ingest", "filter"];
    if !external {
        names.push("train");
    }
    names.extend(["classify", "sentiment", "aggregate", "stats", "pls"]);
    names
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| {
        CliError::Validation(format!(
            "cannot create output directory {}: {e}",
            out.display()
        ))
    })
}

fn write_timings(out: &Path, timings: &BTreeMap<String, f64>) {
    let mut merged: BTreeMap<String, f64> = fs::read_to_string(out.join(TIMINGS_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    merged.extend(timings.iter().map(|(k, v)| (k.clone(), *v)));
    if let Ok(text) = serde_json::to_string_pretty(&merged) {
        let _ = fs::write(out.join(TIMINGS_FILE), text + "\n");
    }
}

fn execute(
    ctx: &Context,
    name: &str,
    f: StageFn,
    manifest: &mut RunManifest,
    timings: &mut BTreeMap<String, f64>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let result = f(ctx);
    timings.insert(name.to_string(), start.elapsed().as_secs_f64());
    match result {
        Ok(rec) => {
            manifest.record(rec);
            Ok(())
        }
        Err(e) => {
            let message = format!("{e:#}");
            manifest.record(StageRecord::failed(name, message.clone()));
            Err(CliError::Stage {
                stage: name.to_string(),
                message,
            })
        }
    }
}

fn finish(
    out: &Path,
    manifest: &RunManifest,
    timings: &BTreeMap<String, f64>,
) -> Result<(), CliError> {
    write_timings(out, timings);
    manifest.write(out).map_err(|e| CliError::Stage {
        stage: "manifest".into(),
        message: e.to_string(),
    })
}

/// Run every stage in order, then collate `report.md`. A failing stage
/// stops the run; outputs written so far stay in place and the manifest
/// marks the failure.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    config.validate()?;
    prepare_out(out)?;
    let ctx = Context {
        config,
        out: out.to_path_buf(),
        seed: config.seed,
    };
    let mut manifest = RunManifest::new(config.seed, Some(config.clone()));
    let mut timings = BTreeMap::new();
    for name in pipeline_stages(config) {
        let f = stage_fn(name).expect("pipeline stage is known");
        if let Err(e) = execute(&ctx, name, f, &mut manifest, &mut timings) {
            finish(out, &manifest, &timings)?;
            return Err(e);
        }
    }
    finish(out, &manifest, &timings)?;
    run_report(out, &mut manifest)?;
    Ok(manifest)
}

fn run_report(out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let result = report::write(out);
    let mut rec = StageRecord::new("report", "files");
    match result {
        Ok(()) => rec.output(report::REPORT_FILE),
        Err(e) => {
            let message = format!("{e:#}");
            manifest.record(StageRecord::failed("report", message.clone()));
            manifest.write(out).ok();
            return Err(CliError::Stage {
                stage: "report".into(),
                message,
            });
        }
    }
    manifest.record(rec);
    manifest.write(out).map_err(|e| CliError::Stage {
        stage: "manifest".into(),
        message: e.to_string(),
    })
}

/// Run one stage against an existing output directory and update its
/// manifest.
pub fn run_stage(config: &RunConfig, out: &Path, name: &str) -> Result<RunManifest, CliError> {
    let f =
        stage_fn(name).ok_or_else(|| CliError::Validation(format!("unknown stage {name:?}")))?;
    config.validate()?;
    prepare_out(out)?;
    let ctx = Context {
        config,
        out: out.to_path_buf(),
        seed: config.seed,
    };
    let mut manifest = RunManifest::load_or_new(out, config.seed, Some(config.clone()));
    let mut timings = BTreeMap::new();
    let result = execute(&ctx, name, f, &mut manifest, &mut timings);
    finish(out, &manifest, &timings)?;
    result.map(|_| manifest)
}

/// Collate `report.md` from whatever the output directory holds.
pub fn run_report_only(out: &Path) -> Result<(), CliError> {
    if !out.is_dir() {
        return Err(CliError::Validation(format!(
            "output directory not found: {}",
            out.display()
        )));
    }
    let existing = fs::read_to_string(out.join(manifest::MANIFEST_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok());
    match existing {
        Some(mut m) => run_report(out, &mut m),
        None => report::write(out).map_err(|e| CliError::Stage {
            stage: "report".into(),
            message: format!("{e:#}"),
        }),
    }
}

/// Standalone PLS on a plain CSV table.
pub fn run_pls_table(
    table: &Path,
    response: &str,
    out: &Path,
    seed: u64,
    pls: &config::PlsConfig,
) -> Result<RunManifest, CliError> {
    if !table.is_file() {
        return Err(CliError::Validation(format!(
            "table not found: {}",
            table.display()
        )));
    }
    if pls.folds < 2 || pls.max_components == 0 {
        return Err(CliError::Validation(
            "pls folds must be >= 2 and max_components >= 1".into(),
        ));
    }
    prepare_out(out)?;
    let mut manifest = RunManifest::load_or_new(out, seed, None);
    let start = Instant::now();
    let mut rec = StageRecord::new("pls", "rows");
    let result = stages::pls_input_from_table(table, response, &mut rec).and_then(|input| {
        stages::run_pls(
            input,
            pls,
            densitylens::seed::for_label(seed, "pls"),
            out,
            &mut rec,
        )
    });
    let mut timings = BTreeMap::new();
    timings.insert("pls".to_string(), start.elapsed().as_secs_f64());
    let outcome = match result {
        Ok(()) => {
            manifest.record(rec);
            Ok(())
        }
        Err(e) => {
            let message = format!("{e:#}");
            manifest.record(StageRecord::failed("pls", message.clone()));
            Err(CliError::Stage {
                stage: "pls".into(),
                message,
            })
        }
    };
    finish(out, &manifest, &timings)?;
    outcome.map(|_| manifest)
}
