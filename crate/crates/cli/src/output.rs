//! Result tables and plot-ready curve files.

use std::fs;
use std::path::{Path, PathBuf};

use censored_gp::Dataset;
use serde::Serialize;

use crate::config::Model;
use crate::error::CliError;
use crate::runner::{ExperimentOutput, PosteriorCurve, ResultRecord};

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub model: Model,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub threshold: Option<f64>,
    pub split: &'static str,
    /// Repeats that produced a score.
    pub n_ok: usize,
    pub n_failed: usize,
    pub rmse_mean: f64,
    /// Sample standard deviation over repeats (NaN below two).
    pub rmse_sd: f64,
    pub r2_mean: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct CurveRow {
    x: f64,
    mean: f64,
    lower95: f64,
    upper95: f64,
    y_observed: f64,
    y_latent: f64,
    label: u8,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct DatasetRow {
    x: f64,
    y: f64,
    y_latent: f64,
    label: u8,
    threshold: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Averages records over repeats, one row per (model, grid point, split) in
/// the records' order. Failed repeats are counted, not averaged.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Model, usize, &'static str)> = Vec::new();
    for r in records {
        let k = (r.model, r.grid_index, r.split);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(model, g, split)| {
            let cell: Vec<&ResultRecord> =
                records.iter().filter(|r| r.model == model && r.grid_index == g && r.split == split).collect();
            let ok: Vec<&&ResultRecord> = cell.iter().filter(|r| !r.failed()).collect();
            let rmse: Vec<f64> = ok.iter().map(|r| r.rmse).collect();
            let r2: Vec<f64> = ok.iter().map(|r| r.r2).collect();
            let m = mean(&rmse);
            let sd = if rmse.len() < 2 {
                f64::NAN
            } else {
                (rmse.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (rmse.len() - 1) as f64).sqrt()
            };
            let pt = cell[0].grid_point();
            SummaryRow {
                model,
                c: pt.c,
                gamma: pt.gamma,
                p: pt.p,
                a: pt.a,
                b: pt.b,
                threshold: pt.threshold,
                split,
                n_ok: ok.len(),
                n_failed: cell.len() - ok.len(),
                rmse_mean: m,
                rmse_sd: sd,
                r2_mean: mean(&r2),
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let werr = |source| CliError::Write { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(werr)?;
    for row in rows {
        w.serialize(row).map_err(werr)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write_curve(path: &Path, curve: &PosteriorCurve) -> Result<(), CliError> {
    write_rows(
        path,
        (0..curve.x.len()).map(|i| {
            let half = 1.96 * curve.var[i].sqrt();
            CurveRow {
                x: curve.x[i],
                mean: curve.mean[i],
                lower95: curve.mean[i] - half,
                upper95: curve.mean[i] + half,
                y_observed: curve.y_observed[i],
                y_latent: curve.y_latent[i],
                label: curve.label[i] as u8,
            }
        }),
    )
}

/// Writes a censored dataset with its first feature column as `x`.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let x = data.features().column(0);
    write_rows(
        path,
        (0..data.n()).map(|i| DatasetRow {
            x: x[i],
            y: data.observed()[i],
            y_latent: data.scoring_targets()[i],
            label: data.censored()[i] as u8,
            threshold: data.thresholds()[i],
        }),
    )
}

/// Writes results.csv, summary.csv, one posterior_curve_<model>.csv per
/// model with a curve, and the curve cell's dataset.csv. Returns the paths.
pub fn emit_results(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if output.records.is_empty() {
        return Err(CliError::Config("no records to write".into()));
    }
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let results = dir.join("results.csv");
    write_rows(&results, &output.records)?;
    written.push(results);
    let summary = dir.join("summary.csv");
    write_rows(&summary, summarize(&output.records))?;
    written.push(summary);
    for curve in &output.curves {
        let path = dir.join(format!("posterior_curve_{}.csv", curve.model));
        write_curve(&path, curve)?;
        written.push(path);
    }
    if let Some(data) = &output.curve_data {
        let path = dir.join("dataset.csv");
        write_dataset(&path, data)?;
        written.push(path);
    }
    Ok(written)
}
