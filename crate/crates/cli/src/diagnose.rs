//! The `diagnose` subcommand: calibration coverage report from saved
//! diagnostics inputs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use scorecal::artifacts::read_diagnostics_csv;
use scorecal::diagnostics::{coverage_curve, default_grid, CoverageCurve, PARITY_BAND};
use scorecal::pipeline::DiagnosticPair;

use crate::error::{from_library, CliError};

/// Diagnostics CSV files behind `path`: the file itself, the one named by a
/// `replicate_<k>.json` document, or every `diagnostics_<k>.csv` in a
/// directory.
pub fn inputs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        let mut found: Vec<(usize, PathBuf)> = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let k = name.strip_prefix("diagnostics_")?.strip_suffix(".csv")?.parse().ok()?;
                Some((k, e.path()))
            })
            .collect();
        if found.is_empty() {
            return Err(CliError::input(format!("no diagnostics_<k>.csv files in {}", path.display())));
        }
        found.sort();
        return Ok(found.into_iter().map(|(_, p)| p).collect());
    }
    if !path.is_file() {
        return Err(CliError::input(format!("{} does not exist", path.display())));
    }
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path)?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let name = doc["diagnostics_inputs"]
            .as_str()
            .ok_or_else(|| CliError::input(format!("{} has no diagnostics_inputs entry", path.display())))?;
        let csv = path.parent().unwrap_or(Path::new(".")).join(name);
        if !csv.is_file() {
            return Err(CliError::input(format!("diagnostics inputs {} not found", csv.display())));
        }
        return Ok(vec![csv]);
    }
    Ok(vec![path.to_path_buf()])
}

pub fn load(files: &[PathBuf]) -> Result<(Vec<String>, Vec<DiagnosticPair>), CliError> {
    let mut parameters: Option<Vec<String>> = None;
    let mut pairs = Vec::new();
    for f in files {
        let (names, mut p) =
            read_diagnostics_csv(f).map_err(|e| CliError::input(format!("{}: {e}", f.display())))?;
        match &parameters {
            Some(prev) if *prev != names => {
                return Err(CliError::input(format!("{}: parameter columns differ", f.display())))
            }
            _ => parameters = Some(names),
        }
        pairs.append(&mut p);
    }
    if pairs.is_empty() {
        return Err(CliError::input("diagnostics inputs contain no datasets"));
    }
    Ok((parameters.unwrap_or_default(), pairs))
}

/// Header, then one `PASS`/`WARN` line per parameter.
pub fn report(curve: &CoverageCurve, band: f64) -> String {
    let grid: Vec<String> = curve.grid.iter().map(|g| format!("{g:.2}")).collect();
    let mut out = String::new();
    writeln!(out, "grid: {}", grid.join(",")).unwrap();
    writeln!(out, "band: {band}").unwrap();
    writeln!(out, "datasets: {}", curve.m_count).unwrap();
    for (p, name) in curve.parameters.iter().enumerate() {
        let status = if curve.within_band(p, band) { "PASS" } else { "WARN" };
        let cc: Vec<String> = curve.cc[p].iter().map(|c| format!("{c:.2}")).collect();
        writeln!(
            out,
            "{status} {name} max|CC-rho|={:.3} cc={}",
            curve.max_deviation(p),
            cc.join(",")
        )
        .unwrap();
    }
    out
}

/// Computes the coverage curve, writes it to `csv_out` and returns the
/// printed report.
pub fn diagnose(path: &Path, csv_out: Option<&Path>) -> Result<String, CliError> {
    let files = inputs(path)?;
    let (parameters, pairs) = load(&files)?;
    let curve = coverage_curve(&pairs, &default_grid(), &parameters).map_err(|e| from_library(e, None))?;
    let target = match csv_out {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
            dir.join("diagnose_coverage.csv")
        }
    };
    curve
        .write_csv(BufWriter::new(File::create(&target)?))
        .map_err(|e| from_library(e, None))?;
    Ok(report(&curve, PARITY_BAND))
}
