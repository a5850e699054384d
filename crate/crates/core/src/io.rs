//! CSV ingestion and emission for time series and scenario directories.
//!
//! Load files carry the header `timestamp,mw`; signal files `timestamp,r`.
//! Timestamps are integer epoch seconds or RFC 3339; spacing must be
//! strictly uniform and is validated on ingest. Values are written with
//! full round-trip precision so piped artifacts are lossless.

use crate::error::{Error, Result};
use crate::planner::ScenarioSet;
use crate::series::TimeSeries;
use chrono::DateTime;
use std::fs;
use std::path::Path;

/// Parse a timestamp cell: integer seconds or RFC 3339.
fn parse_timestamp(cell: &str, row: usize) -> Result<i64> {
    if let Ok(secs) = cell.parse::<i64>() {
        return Ok(secs);
    }
    DateTime::parse_from_rfc3339(cell)
        .map(|dt| dt.timestamp())
        .map_err(|_| {
            Error::Validation(format!(
                "row {row}: timestamp {cell:?} is neither integer seconds nor RFC 3339"
            ))
        })
}

/// Read a two-column time series CSV. The first header column must be
/// `timestamp`; the second is the value column (any name).
pub fn read_timeseries_csv(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Validation(format!("{}: empty file", path.display())))?;
    let mut cols = header.split(',');
    if cols.next().map(str::trim) != Some("timestamp") {
        return Err(Error::Validation(format!(
            "{}: header must start with 'timestamp', got {header:?}",
            path.display()
        )));
    }
    if cols.next().is_none() || cols.next().is_some() {
        return Err(Error::Validation(format!(
            "{}: expected exactly two columns, got {header:?}",
            path.display()
        )));
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based, header is row 1
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let (Some(ts), Some(val), None) = (cells.next(), cells.next(), cells.next()) else {
            return Err(Error::Validation(format!(
                "{}: row {row}: expected two cells, got {line:?}",
                path.display()
            )));
        };
        timestamps.push(parse_timestamp(ts.trim(), row)?);
        let v: f64 = val.trim().parse().map_err(|_| {
            Error::Validation(format!(
                "{}: row {row}: bad numeric value {val:?}",
                path.display()
            ))
        })?;
        values.push(v);
    }
    if timestamps.len() < 2 {
        return Err(Error::Validation(format!(
            "{}: need at least two rows to establish the step size",
            path.display()
        )));
    }
    let step = (timestamps[1] - timestamps[0]) as f64;
    if step <= 0.0 {
        return Err(Error::Validation(format!(
            "{}: non-increasing timestamps at row 3",
            path.display()
        )));
    }
    for (i, pair) in timestamps.windows(2).enumerate() {
        let gap = (pair[1] - pair[0]) as f64;
        if (gap - step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::Validation(format!(
                "{}: row {}: spacing {gap} s breaks the uniform {step} s grid",
                path.display(),
                i + 3
            )));
        }
    }
    TimeSeries::new(step, values)
}

/// Write a time series with integer-second timestamps starting at
/// `start_epoch` and the given value-column header.
pub fn write_timeseries_csv(
    path: &Path,
    series: &TimeSeries,
    value_header: &str,
    start_epoch: i64,
) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str("timestamp,");
    out.push_str(value_header);
    out.push('\n');
    let step = series.step_seconds();
    for (i, v) in series.values().iter().enumerate() {
        let ts = start_epoch + (i as f64 * step).round() as i64;
        out.push_str(&format!("{ts},{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a scenario directory: `scenario_<i>.csv` for consecutive `i`
/// starting at 0, plus `weights.csv` with header `scenario,weight`.
pub fn read_scenario_dir(dir: &Path) -> Result<ScenarioSet> {
    let weights_path = dir.join("weights.csv");
    let text = fs::read_to_string(&weights_path)
        .map_err(|e| Error::io(weights_path.display().to_string(), e))?;
    let mut weights = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "scenario,weight" {
                return Err(Error::Validation(format!(
                    "{}: header must be 'scenario,weight'",
                    weights_path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let (Some(id), Some(w)) = (cells.next(), cells.next()) else {
            return Err(Error::Validation(format!(
                "{}: row {}: expected two cells",
                weights_path.display(),
                idx + 1
            )));
        };
        let id: usize = id.trim().parse().map_err(|_| {
            Error::Validation(format!(
                "{}: row {}: bad scenario index {id:?}",
                weights_path.display(),
                idx + 1
            ))
        })?;
        if id != weights.len() {
            return Err(Error::Validation(format!(
                "{}: row {}: scenario indices must be consecutive from 0",
                weights_path.display(),
                idx + 1
            )));
        }
        let w: f64 = w.trim().parse().map_err(|_| {
            Error::Validation(format!(
                "{}: row {}: bad weight {w:?}",
                weights_path.display(),
                idx + 1
            ))
        })?;
        weights.push(w);
    }
    let scenarios: Vec<TimeSeries> = (0..weights.len())
        .map(|i| read_timeseries_csv(&dir.join(format!("scenario_{i}.csv"))))
        .collect::<Result<_>>()?;
    ScenarioSet::new(scenarios, weights)
}

/// Write a scenario directory in the layout read by [`read_scenario_dir`].
pub fn write_scenario_dir(dir: &Path, set: &ScenarioSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut weights = String::from("scenario,weight\n");
    for (i, w) in set.weights().iter().enumerate() {
        weights.push_str(&format!("{i},{w}\n"));
    }
    fs::write(dir.join("weights.csv"), weights)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (i, s) in set.scenarios().iter().enumerate() {
        write_timeseries_csv(&dir.join(format!("scenario_{i}.csv")), s, "r", 0)?;
    }
    Ok(())
}
