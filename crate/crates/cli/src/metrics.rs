//! Append-safe metrics output in CSV or JSON lines.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use spikelda::online::{TrajectoryRecord, TRAJECTORY_CSV_HEADER};

use crate::config::Format;
use crate::CliError;

pub const METRICS_CSV_HEADER: &str = "algo,iter,perplexity,seed";

/// Version tag carried by every JSON metrics line. CSV files are versioned by
/// their header, which is checked before appending.
pub const METRICS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema: u32,
    pub algo: String,
    pub iter: u64,
    pub perplexity: f64,
    pub seed: u64,
}

impl MetricsRow {
    pub fn new(algo: impl Into<String>, iter: u64, perplexity: f64, seed: u64) -> Self {
        Self {
            schema: METRICS_SCHEMA,
            algo: algo.into(),
            iter,
            perplexity,
            seed,
        }
    }

    fn csv(&self) -> String {
        format!("{},{},{},{}", self.algo, self.iter, self.perplexity, self.seed)
    }
}

fn data_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Opens `path` for appending. A non-empty CSV file must start with
/// `header`; an empty one gets it written first.
fn open_append(path: &Path, format: Format, header: &str) -> Result<File, CliError> {
    let existing = match File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first).map_err(|e| data_err(path, e))?;
            Some(first.trim_end().to_string())
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(data_err(path, e)),
    };
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| data_err(path, e))?;
    if format == Format::Csv {
        match existing.as_deref() {
            None | Some("") => writeln!(file, "{header}").map_err(|e| data_err(path, e))?,
            Some(h) if h == header => {}
            Some(h) => {
                return Err(CliError::Data(format!(
                    "{} has header `{h}`, expected `{header}`; refusing to append",
                    path.display()
                )))
            }
        }
    }
    Ok(file)
}

pub fn write_metrics(rows: &[MetricsRow], format: Format, path: Option<&Path>) -> Result<(), CliError> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| match format {
            Format::Csv => r.csv(),
            Format::Json => serde_json::to_string(r).expect("row serializes"),
        })
        .collect();
    emit(&lines, format, METRICS_CSV_HEADER, path)
}

pub fn write_trajectory(records: &[TrajectoryRecord], format: Format, path: &Path) -> Result<(), CliError> {
    let lines: Vec<String> = records
        .iter()
        .map(|r| match format {
            Format::Csv => r.csv_row(),
            Format::Json => serde_json::to_string(r).expect("record serializes"),
        })
        .collect();
    emit(&lines, format, TRAJECTORY_CSV_HEADER, Some(path))
}

fn emit(lines: &[String], format: Format, header: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut f = open_append(p, format, header)?;
            for l in lines {
                writeln!(f, "{l}").map_err(|e| data_err(p, e))?;
            }
        }
        None => {
            let mut out = io::stdout().lock();
            if format == Format::Csv {
                let _ = writeln!(out, "{header}");
            }
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
        }
    }
    Ok(())
}
