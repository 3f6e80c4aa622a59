//! The agreement report written by `evaluate`: one row per
//! (training data, test data, method, measurement), millimeters throughout.

use std::path::Path;

use fetal_biometry::metrics::{AgreementReport, Ci95Form};
use fetal_biometry::MeasurementKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const REPORT_COLUMNS: [&str; 10] = [
    "train_db",
    "test_db",
    "method",
    "measurement",
    "n",
    "bias_mm",
    "ci95_mm",
    "mean_l1_mm",
    "median_l1_mm",
    "ci95_form",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub train_db: String,
    pub test_db: String,
    pub method: String,
    pub measurement: MeasurementKind,
    pub n: usize,
    pub bias_mm: f64,
    pub ci95_mm: f64,
    pub mean_l1_mm: f64,
    pub median_l1_mm: f64,
    pub ci95_form: Ci95Form,
}

impl ReportRow {
    pub fn new(train_db: &str, test_db: &str, method: &str, measurement: MeasurementKind, r: &AgreementReport) -> Self {
        Self {
            train_db: train_db.to_string(),
            test_db: test_db.to_string(),
            method: method.to_string(),
            measurement,
            n: r.n,
            bias_mm: r.bias,
            ci95_mm: r.ci95,
            mean_l1_mm: r.mean_abs,
            median_l1_mm: r.median_abs,
            ci95_form: r.ci95_form,
        }
    }
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(REPORT_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a report and checks its header against `REPORT_COLUMNS` and every
/// row against the value ranges the statistics can take.
pub fn read_report(path: &Path) -> CliResult<Vec<ReportRow>> {
    let invalid = |msg: String| CliError::invalid(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_COLUMNS {
        return Err(invalid(format!("columns {header:?} differ from {REPORT_COLUMNS:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<ReportRow>().enumerate() {
        let row = rec.map_err(|e| invalid(format!("row {}: {e}", i + 1)))?;
        let stats = [row.bias_mm, row.ci95_mm, row.mean_l1_mm, row.median_l1_mm];
        if stats.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("row {}: non-finite statistic", i + 1)));
        }
        if row.n < 2 || row.ci95_mm < 0.0 || row.mean_l1_mm < 0.0 || row.median_l1_mm < 0.0 {
            return Err(invalid(format!("row {}: statistic out of range", i + 1)));
        }
        if row.bias_mm.abs() > row.mean_l1_mm * (1.0 + 1e-12) + 1e-12 {
            return Err(invalid(format!("row {}: |bias| exceeds mean L1", i + 1)));
        }
        if row.method.is_empty() || row.test_db.is_empty() {
            return Err(invalid(format!("row {}: empty label", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub test_db: String,
    pub measurement: MeasurementKind,
    pub method_a: String,
    pub method_b: String,
    pub n: usize,
    pub t: f64,
    pub p_value: f64,
}

pub fn write_paired(path: &Path, rows: &[PairedRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        ReportRow {
            train_db: "a".into(),
            test_db: "b".into(),
            method: "m".into(),
            measurement: MeasurementKind::Ofd,
            n: 10,
            bias_mm: -0.2,
            ci95_mm: 1.5,
            mean_l1_mm: 0.9,
            median_l1_mm: 0.7,
            ci95_form: Ci95Form::Classical,
        }
    }

    #[test]
    fn written_reports_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&path, &[row(), row()]).unwrap();
        assert_eq!(read_report(&path).unwrap(), vec![row(), row()]);
    }

    #[test]
    fn bias_beyond_mean_l1_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&path, &[ReportRow { bias_mm: 2.0, ..row() }]).unwrap();
        assert!(read_report(&path).is_err());
    }
}
