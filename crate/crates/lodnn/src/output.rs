//! Result rows, the CSV writer and the JSON manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, StudyKind};
use crate::error::AppResult;

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_NAME: &str = "results.csv";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Parameter columns shared by every study.
pub const PARAM_COLUMNS: [&str; 7] = ["d", "H", "eps", "h", "ell", "eta", "seed"];

/// Metric columns of each study, in CSV order.
pub fn metric_schema(kind: StudyKind) -> &'static [&'static str] {
    match kind {
        StudyKind::FineSweep => &["h1_error", "energy_error", "l2_error", "h1_rate", "s_target"],
        StudyKind::EllSweep => &["l2_clod_vs_pg", "l2_pg_vs_fine", "l2_clod_vs_fine", "l2_norm_pg"],
        StudyKind::CoarseSweep => &[
            "l2_pg_vs_fine",
            "l2_norm_fine",
            "l2_pg_vs_nn",
            "l2_pg_vs_nn_over_H",
            "euclidean_gap",
            "scaled_gap",
            "matrix_gap",
            "patch_error_sum",
            "patch_error_max",
            "surrogate_patches",
            "total_patches",
            "network_depth",
            "network_params",
            "theta",
            "gamma",
        ],
        StudyKind::EigStudy => &[
            "lambda_min_sc",
            "lambda_min_sc_over_Hd",
            "fine_lambda_max_scaled",
            "fine_lambda_min_scaled",
            "mass_ratio_min",
            "mass_ratio_max",
            "mass_lower_factor",
            "norm_equiv_violations",
        ],
        StudyKind::NnCalculusSuite => &[
            "cases",
            "failures",
            "max_error",
            "max_norm_excess",
            "asymmetric_outputs",
            "network_depth",
            "network_params",
        ],
        StudyKind::LocalContract => &[
            "cases",
            "failures",
            "max_error",
            "mean_error",
            "error_bound",
            "certificate_matches",
            "network_depth",
            "network_params",
            "theta",
            "gamma",
        ],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Params {
    pub d: Option<usize>,
    pub coarse_size: Option<f64>,
    pub eps: Option<f64>,
    pub fine_size: Option<f64>,
    pub ell: Option<usize>,
    pub eta: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub study: StudyKind,
    pub label: String,
    /// `ok`, or the reason the point could not be computed.
    pub status: String,
    pub params: Params,
    pub metrics: Vec<(&'static str, f64)>,
    /// Wall time in seconds; recorded in the manifest only.
    pub seconds: f64,
}

impl ResultRow {
    pub fn new(study: StudyKind, label: impl Into<String>, params: Params) -> Self {
        Self { study, label: label.into(), status: "ok".into(), params, metrics: Vec::new(), seconds: 0.0 }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn push(&mut self, name: &'static str, value: f64) {
        self.metrics.push((name, value));
    }

    /// Marks the row infeasible and drops its metrics.
    pub fn fail(&mut self, reason: impl std::fmt::Display) {
        self.status = format!("infeasible: {reason}");
        self.metrics.clear();
    }

    /// Enforces the schema: known names and finite values.
    pub fn check_schema(&mut self) {
        let schema = metric_schema(self.study);
        if let Some((k, _)) = self.metrics.iter().find(|(k, _)| !schema.contains(k)) {
            let k = *k;
            self.fail(format!("metric {k} not in the schema"));
        } else if let Some((k, v)) = self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            let (k, v) = (*k, *v);
            self.fail(format!("metric {k} is {v}"));
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let plain = format!("{v}");
    let exp = format!("{v:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn csv_header(kind: StudyKind) -> Vec<String> {
    let mut h: Vec<String> = ["study", "label", "status"].iter().map(|s| s.to_string()).collect();
    h.extend(PARAM_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(metric_schema(kind).iter().map(|s| s.to_string()));
    h
}

pub fn csv_record(row: &ResultRow) -> Vec<String> {
    let p = &row.params;
    let mut r = vec![row.study.name().to_string(), row.label.clone(), row.status.clone()];
    r.push(opt(p.d, |v| v.to_string()));
    r.push(opt(p.coarse_size, format_f64));
    r.push(opt(p.eps, format_f64));
    r.push(opt(p.fine_size, format_f64));
    r.push(opt(p.ell, |v| v.to_string()));
    r.push(opt(p.eta, format_f64));
    r.push(p.seed.to_string());
    for name in metric_schema(row.study) {
        r.push(opt(row.metric(name), format_f64));
    }
    r
}

pub fn write_csv<W: Write>(w: W, kind: StudyKind, rows: &[ResultRow]) -> AppResult<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(csv_header(kind))?;
    for row in rows {
        out.write_record(csv_record(row))?;
    }
    out.flush()?;
    Ok(())
}

pub fn csv_string(kind: StudyKind, rows: &[ResultRow]) -> AppResult<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, kind, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Environment {
    tool: &'static str,
    version: &'static str,
    os: &'static str,
    arch: &'static str,
    threads: usize,
}

#[derive(Debug, Serialize)]
struct RowTiming<'a> {
    label: &'a str,
    status: &'a str,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    study: &'static str,
    columns: Vec<String>,
    config: &'a ExperimentConfig,
    environment: Environment,
    checksums: Vec<(String, String)>,
    timings: Vec<RowTiming<'a>>,
    total_seconds: f64,
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

/// Writes the CSV and the manifest into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, rows: &[ResultRow], threads: usize, total_seconds: f64) -> AppResult<OutputFiles> {
    fs::create_dir_all(dir)?;
    let csv_text = csv_string(cfg.study, rows)?;
    let csv_path = dir.join(CSV_NAME);
    fs::write(&csv_path, &csv_text)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        study: cfg.study.name(),
        columns: csv_header(cfg.study),
        config: cfg,
        environment: Environment {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads,
        },
        checksums: vec![(CSV_NAME.to_string(), sha256_hex(csv_text.as_bytes()))],
        timings: rows.iter().map(|r| RowTiming { label: &r.label, status: &r.status, seconds: r.seconds }).collect(),
        total_seconds,
    };
    let manifest_path = dir.join(MANIFEST_NAME);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(OutputFiles { csv: csv_path, manifest: manifest_path })
}
