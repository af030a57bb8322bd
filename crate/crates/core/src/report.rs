//! Report files: a text table in the layout of the published results,
//! per-fold CSV and JSON, long-format plot data and a run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, ExperimentReport, Stat};
use crate::metrics::RateReport;

pub const NA: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

/// Three decimals, ties to even on the exact binary value.
pub fn fmt3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Like [`fmt3`] without trailing zeros, as in `19 → 1 (0 Std)`.
pub fn fmt_short(v: f64) -> String {
    let s = fmt3(v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| NA.into(), fmt3)
}

fn stat_cells(s: &Option<Stat>) -> (String, String) {
    match s {
        Some(s) => (fmt3(s.mean), fmt3(s.std)),
        None => (NA.into(), NA.into()),
    }
}

/// The `N → mean (std Std)` cell.
pub fn reduction_cell(n_features: usize, features: &Option<Stat>) -> String {
    match features {
        Some(s) => format!("{n_features} → {} ({} Std)", fmt_short(s.mean), fmt_short(s.std)),
        None => format!("{n_features} → {NA}"),
    }
}

pub fn render_text(r: &ExperimentReport) -> String {
    let c = &r.config;
    let s = &r.summary;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Dataset: {} ({} samples, {} features, {} positive)",
        r.dataset, r.n_samples, r.n_features, r.n_pos
    );
    let kernel = match c.kernel {
        crate::harness::KernelChoice::Linear => "linear",
        crate::harness::KernelChoice::Rbf => "rbf",
    };
    let mode = match c.thresholds {
        crate::metrics::ThresholdMode::Plain => "plain",
        crate::metrics::ThresholdMode::Hoeffding => "hoeffding",
    };
    let validation = if r.leave_one_out {
        "leave-one-out".to_string()
    } else {
        format!("{}-fold", r.folds.len())
    };
    let _ = writeln!(out, "Kernel: {kernel}  Thresholds: {mode}  Validation: {validation}  Seed: {}", c.seed);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8}{:^16}{:^16}", "", "SVM", "FS");
    let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}", "", "Mean", "Std", "Mean", "Std");
    for (name, base, fs) in [
        ("Acc", &s.baseline_acc, &s.acc),
        ("TPR", &s.baseline_tpr, &s.tpr),
        ("TNR", &s.baseline_tnr, &s.tnr),
    ] {
        let (bm, bs) = stat_cells(base);
        let (fm, fsd) = stat_cells(fs);
        let _ = writeln!(out, "{name:<8}{bm:>8}{bs:>8}{fm:>8}{fsd:>8}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Feature reduction: {}", reduction_cell(r.n_features, &s.features));
    if r.infeasible_folds > 0 {
        let _ = writeln!(
            out,
            "WARNING: {} of {} folds infeasible; lower the rate thresholds",
            r.infeasible_folds,
            r.folds.len()
        );
    }
    for w in &r.warnings {
        let _ = writeln!(out, "note: {w}");
    }
    out
}

fn rate_cells(r: Option<&RateReport>) -> [String; 4] {
    match r {
        Some(r) => [fmt3(r.acc), opt3(r.tpr), opt3(r.tnr), opt3(r.gmean)],
        None => std::array::from_fn(|_| NA.to_string()),
    }
}

pub fn render_csv(r: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "fold",
        "n_train",
        "n_test",
        "n_selected",
        "cost",
        "c",
        "gamma",
        "acc",
        "tpr",
        "tnr",
        "gmean",
        "baseline_acc",
        "baseline_tpr",
        "baseline_tnr",
        "lambda_pos",
        "lambda_neg",
        "p1_status",
        "svm_status",
        "selected",
    ])?;
    for f in &r.folds {
        let selected: Vec<&str> = f
            .mask
            .iter()
            .zip(&r.feature_names)
            .filter(|(m, _)| **m)
            .map(|(_, n)| n.as_str())
            .collect();
        let rates = rate_cells(f.rates.as_ref());
        let base = rate_cells(Some(&f.baseline));
        let mut rec = vec![
            f.fold.to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            f.n_selected.to_string(),
            fmt_short(f.cost),
            f.c.map_or_else(|| NA.into(), fmt_short),
            f.gamma.map_or_else(|| NA.into(), fmt_short),
        ];
        rec.extend(rates);
        rec.extend(base.into_iter().take(3));
        rec.push(fmt3(f.thresholds.pos));
        rec.push(fmt3(f.thresholds.neg));
        rec.push(f.p1_status.as_str().into());
        rec.push(f.svm_status.map_or(NA, |s| s.as_str()).into());
        rec.push(selected.join(";"));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

pub fn render_json(r: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    Ok(s)
}

pub fn render_table(r: &ExperimentReport, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Text => Ok(render_text(r)),
        TableFormat::Csv => render_csv(r),
        TableFormat::Json => render_json(r),
    }
}

/// Long-format `dataset,metric,fold,value` rows; one per fold and metric.
pub fn render_plotdata(r: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "metric", "fold", "value"])?;
    type Getter = fn(&crate::harness::FoldResult) -> Option<f64>;
    let metrics: [(&str, Getter); 4] = [
        ("acc", |f| f.rates.map(|r| r.acc)),
        ("tpr", |f| f.rates.and_then(|r| r.tpr)),
        ("tnr", |f| f.rates.and_then(|r| r.tnr)),
        ("features", |f| (!f.infeasible()).then_some(f.n_selected as f64)),
    ];
    for (name, get) in metrics {
        for f in &r.folds {
            let v = get(f).map_or_else(|| NA.to_string(), |v| v.to_string());
            w.write_record([r.dataset.as_str(), name, &f.fold.to_string(), &v])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFingerprint {
    pub path: String,
    pub rows: usize,
    pub columns: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveEntry {
    pub fold: usize,
    pub p1_status: String,
    pub p1_gap: Option<f64>,
    pub p1_nodes: usize,
    pub svm_status: Option<String>,
    pub svm_gap: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetFingerprint,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub solves: Vec<SolveEntry>,
    /// SHA-256 of every report file written next to the manifest.
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(report: &ExperimentReport, dataset: DatasetFingerprint, started_unix: u64, finished_unix: u64) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: report.config.clone(),
            dataset,
            seed: report.config.seed,
            started_unix,
            finished_unix,
            solves: report
                .folds
                .iter()
                .map(|f| SolveEntry {
                    fold: f.fold,
                    p1_status: f.p1_status.as_str().into(),
                    p1_gap: finite(f.p1_gap),
                    p1_nodes: f.p1_nodes,
                    svm_status: f.svm_status.map(|s| s.as_str().into()),
                    svm_gap: f.svm_gap.and_then(finite),
                    wall_time: f.wall_time,
                })
                .collect(),
            outputs: Vec::new(),
        }
    }
}

pub const REPORT_FILES: [&str; 4] = ["report.txt", "report.csv", "report.json", "plotdata.csv"];

/// Writes the four report files and `manifest.json` into `dir`.
pub fn write_reports(dir: &Path, report: &ExperimentReport, mut manifest: RunManifest) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let contents = [
        render_text(report),
        render_csv(report)?,
        render_json(report)?,
        render_plotdata(report)?,
    ];
    let mut written = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        let path = dir.join(name);
        fs::write(&path, &body).map_err(|e| Error::io(&path, e))?;
        manifest.outputs.push((name.to_string(), sha256_hex(body.as_bytes())));
        written.push(path);
    }
    let path = dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_decimals_round_half_even() {
        assert_eq!(fmt3(0.0625), "0.062");
        assert_eq!(fmt3(0.1875), "0.188");
        assert_eq!(fmt3(1.0), "1.000");
        assert_eq!(fmt3(-0.0001), "0.000");
        assert_eq!(fmt_short(1.0), "1");
        assert_eq!(fmt_short(0.0), "0");
        assert_eq!(fmt_short(2.25), "2.25");
    }

    #[test]
    fn reduction_cell_layout() {
        let s = Stat { mean: 1.0, std: 0.0, n: 10 };
        assert_eq!(reduction_cell(19, &Some(s)), "19 → 1 (0 Std)");
        assert_eq!(reduction_cell(19, &None), "19 → NA");
    }
}
