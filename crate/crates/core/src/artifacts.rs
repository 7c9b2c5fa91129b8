//! On-disk artifacts of a replicated experiment.
//!
//! Layout under the output directory:
//! `manifest.json`, `summary.csv`, `correlations.csv`, `coverage.csv`, and
//! per replicate `replicate_<k>.json`, `draws_<k>.csv`,
//! `diagnostics_<k>.csv`. Results for every `α` after the first go to
//! `alpha_<α>/` with the same per-replicate names.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::{csv_writer, write_correlation_csv, write_summary_csv};
use crate::draws::DrawMatrix;
use crate::error::Result;
use crate::experiment::ExperimentOutcome;
use crate::pipeline::{CalibrationResult, DiagnosticPair};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per draw, one column per parameter.
pub fn write_draws_csv<W: Write>(draws: &DrawMatrix, parameters: &[String], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(parameters)?;
    for row in draws.rows() {
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Long format `dataset,role,<parameters>` with `role` either `theta` or
/// `draw`.
pub fn write_diagnostics_csv<W: Write>(pairs: &[DiagnosticPair], parameters: &[String], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["dataset".to_owned(), "role".to_owned()];
    header.extend(parameters.iter().cloned());
    out.write_record(&header)?;
    for (m, pair) in pairs.iter().enumerate() {
        let mut rec = vec![m.to_string(), "theta".to_owned()];
        rec.extend(pair.theta.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
        for row in pair.draws.rows() {
            let mut rec = vec![m.to_string(), "draw".to_owned()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_diagnostics_csv`].
pub fn read_diagnostics_csv(path: &Path) -> Result<(Vec<String>, Vec<DiagnosticPair>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "dataset" || &headers[1] != "role" {
        return Err(crate::error::invalid("diagnostics", "expected header dataset,role,..."));
    }
    let parameters: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
    let d = parameters.len();
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| crate::error::invalid("diagnostics", format!("cannot parse {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match &rec[1] {
            "theta" => pairs.push((values, Vec::new())),
            "draw" => match pairs.last_mut() {
                Some((_, draws)) => draws.extend(values),
                None => return Err(crate::error::invalid("diagnostics", "draw before theta")),
            },
            other => return Err(crate::error::invalid("diagnostics", format!("unknown role {other:?}"))),
        }
    }
    let pairs = pairs
        .into_iter()
        .map(|(theta, draws)| {
            Ok(DiagnosticPair {
                theta,
                draws: DrawMatrix::new(draws.len() / d.max(1), d, draws)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((parameters, pairs))
}

/// Writes the JSON document and both CSVs for one calibration result.
pub fn write_result(result: &CalibrationResult, parameters: &[String], dir: &Path, k: usize) -> Result<()> {
    let draws = format!("draws_{k}.csv");
    let diagnostics = format!("diagnostics_{k}.csv");
    write_draws_csv(&result.adjusted_draws, parameters, create(&dir.join(&draws))?)?;
    write_diagnostics_csv(&result.diagnostics, parameters, create(&dir.join(&diagnostics))?)?;
    let mut json = create(&dir.join(format!("replicate_{k}.json")))?;
    serde_json::to_writer_pretty(&mut json, &result.document(&diagnostics, &draws))?;
    json.write_all(b"\n")?;
    json.flush()?;
    Ok(())
}

/// Subdirectory holding results for the `a`-th clipping level.
pub fn alpha_dir(root: &Path, alphas: &[f64], a: usize) -> PathBuf {
    if a == 0 {
        root.to_path_buf()
    } else {
        root.join(format!("alpha_{}", alphas[a]))
    }
}

pub fn write_experiment<D>(
    outcome: &ExperimentOutcome<D>,
    alphas: &[f64],
    manifest: &serde_json::Value,
    root: &Path,
) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut m = create(&root.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut m, manifest)?;
    m.write_all(b"\n")?;
    m.flush()?;
    write_summary_csv(&outcome.summary, create(&root.join("summary.csv"))?)?;
    if outcome.parameters.len() > 1 {
        write_correlation_csv(&outcome.summary, create(&root.join("correlations.csv"))?)?;
    }
    outcome.coverage.write_csv(create(&root.join("coverage.csv"))?)?;
    for a in 0..alphas.len() {
        let dir = alpha_dir(root, alphas, a);
        fs::create_dir_all(&dir)?;
        for rep in &outcome.replicates {
            write_result(&rep.results[a], &outcome.parameters, &dir, rep.index)?;
        }
    }
    Ok(())
}
