//! File contracts: dataset bundles in, reports out.
//!
//! Every CSV has a fixed header naming each column with its unit. Timestamps
//! are ISO-8601 UTC, numbers use `.` as decimal separator and are written with
//! 17 significant digits so that they re-load to the same `f64`.

mod bundle;
mod report;

pub use bundle::{
    load_bundle, read_bids, read_forecasts, read_prices, write_bundle, BundleMetadata, BundlePaths, DatasetBundle,
    GapEntry, HourRecord, LoadConfig, QuarterRecord, UnitAnomaly, ValidationReport,
};
pub use report::{
    histogram_file_name, read_cumulative, read_ledger, read_summary, write_report, CumulativeColumns, LedgerRecord,
};

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};

/// Writes `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid ISO-8601 timestamp {s:?}: {e}"))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Reads a CSV whose header must equal `header` exactly, handing each record
/// to `row` together with a closure that builds positioned parse errors.
pub(crate) fn read_csv<F>(path: &Path, header: &[&str], mut row: F) -> Result<()>
where
    F: FnMut(&csv::StringRecord, &dyn Fn(usize, String) -> Error) -> Result<()>,
{
    let file = file_label(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&file, e))?;

    let found = reader.headers().map_err(|e| csv_error(&file, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            file,
            line: 1,
            column: 1,
            message: format!(
                "header must be `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let make = |column: usize, message: String| Error::Parse {
                    file: file.clone(),
                    line,
                    column: column + 1,
                    message,
                };
                row(&record, &make)?;
            }
            Err(e) => return Err(csv_error(&file, e)),
        }
    }
    Ok(())
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        let kind = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            _ => unreachable!(),
        };
        return Error::Io {
            path: file.to_string(),
            source: kind,
        };
    }
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        file: file.to_string(),
        line,
        column: 0,
        message: e.to_string(),
    }
}

pub(crate) fn field_f64(
    record: &csv::StringRecord,
    column: usize,
    make: &dyn Fn(usize, String) -> Error,
) -> Result<f64> {
    let raw = record.get(column).ok_or_else(|| make(column, "missing field".into()))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| make(column, format!("invalid number {raw:?}")))?;
    if !v.is_finite() {
        return Err(make(column, format!("non-finite number {raw:?}")));
    }
    Ok(v)
}

pub(crate) fn field_timestamp(
    record: &csv::StringRecord,
    column: usize,
    make: &dyn Fn(usize, String) -> Error,
) -> Result<DateTime<Utc>> {
    let raw = record.get(column).ok_or_else(|| make(column, "missing field".into()))?;
    parse_timestamp(raw).map_err(|m| make(column, m))
}

pub(crate) fn field_str<'r>(
    record: &'r csv::StringRecord,
    column: usize,
    make: &dyn Fn(usize, String) -> Error,
) -> Result<&'r str> {
    record.get(column).ok_or_else(|| make(column, "missing field".into()))
}

pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
