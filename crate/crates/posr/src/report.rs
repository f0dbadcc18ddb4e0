//! CSV reports, summaries and the per-run manifest.

use std::path::Path;

use serde::Serialize;

use crate::io::{write_json, IoError};

/// Mean and sample standard deviation; the deviation is 0 below two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Writes rows with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let io_err = |e: std::io::Error| IoError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err)
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    IoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

/// One summary row per named column.
pub fn summarize(method: &str, columns: &[(&str, Vec<f64>)]) -> Vec<SummaryRow> {
    columns
        .iter()
        .map(|(metric, values)| {
            let (mean, std) = mean_std(values);
            SummaryRow {
                method: method.to_string(),
                metric: metric.to_string(),
                mean,
                std: Some(std),
                n: values.len(),
            }
        })
        .collect()
}

/// Machine-readable record of what a command did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub flagged: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
            outputs: Vec::new(),
            flagged: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        write_json(&dir.join("run.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_csv(&p, &summarize("m", &[("line_pk", vec![0.5, 0.5])])).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "method,metric,mean,std,n\nm,line_pk,0.5,0.0,2\n");
    }
}
