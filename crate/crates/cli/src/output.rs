//! CSV and JSON emission of curves plus the run metadata sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, Grid, OutputFormat, Selection};
use crate::error::CliError;
use crate::experiments::{format_value, Curve, Row};

pub const CSV_HEADER: &str = "x,value,method,stderr,n_samples,seed";

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub dasrate: &'static str,
    pub dasrate_cli: &'static str,
}

pub fn versions() -> Versions {
    Versions {
        dasrate: dasrate::VERSION,
        dasrate_cli: env!("CARGO_PKG_VERSION"),
    }
}

/// Path of a curve file: `<dir>/<experiment>_<curve-id>.<ext>`.
pub fn curve_path(config: &ExperimentConfig, curve_id: &str) -> PathBuf {
    config.output.dir.join(format!(
        "{}_{curve_id}.{}",
        config.experiment,
        config.output.format.extension()
    ))
}

/// Path of the metadata sidecar.
pub fn meta_path(config: &ExperimentConfig) -> PathBuf {
    config.output.dir.join(format!("{}_meta.json", config.experiment))
}

pub fn csv_text(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let stderr = row.stderr.map(format_value).unwrap_or_default();
        let seed = row.seed.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{stderr},{},{seed}",
            format_value(row.x),
            format_value(row.value),
            row.method,
            row.n_samples
        )
        .expect("writing to a string");
    }
    out
}

/// Rows of a CSV document produced by [`csv_text`].
pub fn parse_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or wrong header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 2));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            let optional = |s: &str| if s.is_empty() { Ok(None) } else { float(s).map(Some) };
            Ok(Row {
                x: float(fields[0])?,
                value: float(fields[1])?,
                method: fields[2].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                stderr: optional(fields[3])?,
                n_samples: fields[4].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                seed: if fields[5].is_empty() {
                    None
                } else {
                    Some(fields[5].parse().map_err(|e| format!("line {}: {e}", i + 2))?)
                },
            })
        })
        .collect()
}

/// Deterministic metadata embedded in each JSON curve file.
#[derive(Serialize)]
struct CurveMeta<'a> {
    experiment: &'a str,
    curve: &'a str,
    grid: &'a Grid,
    plan: &'a dasrate::SimulationPlan,
    selection: &'a Selection,
    versions: Versions,
}

#[derive(Serialize)]
struct JsonCurve<'a> {
    meta: CurveMeta<'a>,
    rows: &'a [Row],
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Create the output directory.
pub fn prepare(config: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.output.dir).map_err(|source| CliError::Write {
        path: config.output.dir.clone(),
        source,
    })
}

/// Write one curve file and return its path.
pub fn write_curve(config: &ExperimentConfig, curve: &Curve) -> Result<PathBuf, CliError> {
    let path = curve_path(config, &curve.id);
    let text = match config.output.format {
        OutputFormat::Csv => csv_text(&curve.rows),
        OutputFormat::Json => {
            let doc = JsonCurve {
                meta: CurveMeta {
                    experiment: config.experiment.as_str(),
                    curve: &curve.id,
                    grid: &config.grid,
                    plan: &config.plan,
                    selection: &config.selection,
                    versions: versions(),
                },
                rows: &curve.rows,
            };
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            text
        }
    };
    write_file(&path, &text)?;
    Ok(path)
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    id: &'a str,
    file: String,
    rows: usize,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    config: &'a ExperimentConfig,
    versions: Versions,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    curves: Vec<CurveSummary<'a>>,
    failures: Vec<String>,
}

/// Write the metadata sidecar: full config, versions, timing and failures.
pub fn write_meta(
    config: &ExperimentConfig,
    curves: &[Curve],
    failures: &[CliError],
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
) -> Result<PathBuf, CliError> {
    let meta = RunMeta {
        config,
        versions: versions(),
        started_unix_seconds,
        wall_clock_seconds,
        curves: curves
            .iter()
            .filter(|c| !c.rows.is_empty())
            .map(|c| CurveSummary {
                id: &c.id,
                file: curve_path(config, &c.id)
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                rows: c.rows.len(),
            })
            .collect(),
        failures: failures.iter().map(ToString::to_string).collect(),
    };
    let path = meta_path(config);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write_file(&path, &text)?;
    Ok(path)
}
