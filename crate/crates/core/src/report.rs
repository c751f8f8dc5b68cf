//! CSV and JSON writers for evaluation results.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, NoisePoint, SweepCell};
use crate::trainer::TraceRecord;

/// Crate version stamped into summaries.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct FoldRow {
    setting: String,
    repeat: usize,
    fold: usize,
    accuracy: f64,
    f1: f64,
    train_seconds: f64,
}

fn fold_rows<'a>(setting: String, report: &'a EvalReport) -> impl Iterator<Item = FoldRow> + 'a {
    report.per_fold.iter().map(move |f| FoldRow {
        setting: setting.clone(),
        repeat: f.repeat,
        fold: f.fold,
        accuracy: f.accuracy,
        f1: f.f1,
        train_seconds: f.train_seconds,
    })
}

/// One row per fold evaluation.
pub fn write_folds_csv(path: &Path, report: &EvalReport) -> Result<()> {
    write_rows(path, fold_rows("cv".into(), report))
}

/// One row per fold evaluation, tagged `C=..;lambda=..`.
pub fn write_sweep_folds_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    write_rows(
        path,
        cells
            .iter()
            .flat_map(|c| fold_rows(format!("C={};lambda={}", c.c, c.lambda), &c.report)),
    )
}

/// One row per fold evaluation, tagged `R=..`.
pub fn write_noise_folds_csv(path: &Path, points: &[NoisePoint]) -> Result<()> {
    write_rows(
        path,
        points
            .iter()
            .flat_map(|p| fold_rows(format!("R={}", p.ratio), &p.report)),
    )
}

/// Per-iteration trace as `iter,objective,residual,seconds`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_rows(path, trace.iter().copied())
}

fn summary(report: &EvalReport) -> serde_json::Value {
    json!({
        "accuracy_mean": report.accuracy_mean,
        "accuracy_std": report.accuracy_std,
        "f1_mean": report.f1_mean,
        "f1_std": report.f1_std,
        "n_folds_evaluated": report.per_fold.len(),
        "config": report.config_echo,
    })
}

/// JSON summary of a single cross-validation run.
pub fn cv_summary(report: &EvalReport) -> serde_json::Value {
    json!({ "version": ARTIFACT_VERSION, "kind": "cv", "result": summary(report) })
}

/// JSON summary of a `C x lambda` sweep.
pub fn sweep_summary(cells: &[SweepCell]) -> serde_json::Value {
    let rows: Vec<_> = cells
        .iter()
        .map(|c| json!({ "c": c.c, "lambda": c.lambda, "result": summary(&c.report) }))
        .collect();
    json!({ "version": ARTIFACT_VERSION, "kind": "sweep", "cells": rows })
}

/// JSON summary of a noise sweep.
pub fn noise_summary(points: &[NoisePoint]) -> serde_json::Value {
    let rows: Vec<_> = points
        .iter()
        .map(|p| json!({ "ratio": p.ratio, "result": summary(&p.report) }))
        .collect();
    json!({ "version": ARTIFACT_VERSION, "kind": "noise_sweep", "points": rows })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}
