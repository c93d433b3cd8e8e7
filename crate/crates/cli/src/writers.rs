// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON output. Files are written to a temporary sibling and then
//! renamed, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub level: usize,
    pub q: f64,
    pub beta: f64,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub level: usize,
    pub t: f64,
    pub p_lower: f64,
    pub p_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingRow {
    pub x: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub index: usize,
    pub eigenvalue: f64,
}

/// All curves produced by one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curves {
    pub beta: Vec<BetaRow>,
    pub pressure: Vec<PressureRow>,
    pub counting: Vec<CountingRow>,
    pub eigenvalues: Vec<EigenRow>,
}

pub const REPORT_FILE: &str = "report.json";
pub const BETA_FILE: &str = "beta.csv";
pub const PRESSURE_FILE: &str = "pressure.csv";
pub const COUNTING_FILE: &str = "counting.csv";
pub const EIGEN_FILE: &str = "eigenvalues.csv";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Output(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn report_bytes(report: &Report) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes the report and every non-empty curve; returns the paths written.
pub fn write_all(dir: &Path, report: &Report, curves: &Curves) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
        Ok(())
    };
    if !curves.beta.is_empty() {
        put(BETA_FILE, csv_bytes(&curves.beta)?)?;
    }
    if !curves.pressure.is_empty() {
        put(PRESSURE_FILE, csv_bytes(&curves.pressure)?)?;
    }
    if !curves.counting.is_empty() {
        put(COUNTING_FILE, csv_bytes(&curves.counting)?)?;
    }
    if !curves.eigenvalues.is_empty() {
        put(EIGEN_FILE, csv_bytes(&curves.eigenvalues)?)?;
    }
    put(REPORT_FILE, report_bytes(report))?;
    Ok(written)
}
