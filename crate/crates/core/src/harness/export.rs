use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

use super::episode::{EpisodeLog, TrajectoryRow, ValueSliceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown export format {other:?}"))),
        }
    }
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["step", "x", "y", "theta", "u", "cost"];
pub const VALUE_SLICE_HEADER: [&str; 3] = ["deviation", "cost", "value"];

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    csv_to(fs::File::create(path)?, header, rows)
}

fn csv_to<T: Serialize, W: Write>(out: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Write the plot tables of a recorded episode into `out_dir`.
///
/// Trajectory and value slice follow `format`; cluster diagnostics and
/// forecasts are always JSON.
pub fn export_log(log: &EpisodeLog, format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let (trajectory, slice) = match format {
        ExportFormat::Csv => {
            let t = out_dir.join("trajectory.csv");
            write_csv::<TrajectoryRow>(&t, &TRAJECTORY_HEADER, &log.trajectory)?;
            let v = out_dir.join("value_slice.csv");
            write_csv::<ValueSliceRow>(&v, &VALUE_SLICE_HEADER, &log.value_slice)?;
            (t, v)
        }
        ExportFormat::Json => {
            let t = out_dir.join("trajectory.json");
            write_json(&t, &log.trajectory)?;
            let v = out_dir.join("value_slice.json");
            write_json(&v, &log.value_slice)?;
            (t, v)
        }
    };
    written.push(trajectory);
    written.push(slice);
    let clusters = out_dir.join("clusters.json");
    write_json(&clusters, &log.clusters)?;
    written.push(clusters);
    let forecasts = out_dir.join("forecasts.json");
    write_json(&forecasts, &log.forecasts)?;
    written.push(forecasts);
    Ok(written)
}

/// Load a log written by `run` and export it.
pub fn export_run(log_path: &Path, format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !log_path.is_file() {
        return Err(Error::Lookup(format!("no episode log at {}", log_path.display())));
    }
    export_log(&EpisodeLog::load(log_path)?, format, out_dir)
}

/// Write the value-slice table alone.
pub fn write_value_slice<W: Write>(rows: &[ValueSliceRow], format: ExportFormat, mut out: W) -> Result<()> {
    match format {
        ExportFormat::Csv => csv_to(out, &VALUE_SLICE_HEADER, rows),
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
            Ok(())
        }
    }
}
