//! On-disk layout of a run:
//!
//! * `<run_id>.csv`: tidy long series with columns `run_id,t,metric,value`. Metrics per
//!   step are `x`, `y`, `theta`, `samples`, `distance` and `ratio` (empty value when
//!   the map has no coral).
//! * `<run_id>.summary.json`: [`MissionSummary`].
//! * `<run_id>.events.json`: planner events in order.
//! * `<run_id>.timings.csv`: `run_id,planner,solver,seconds`, one row per solve.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::{MissionLog, MissionOutput, MissionSummary, TimingLog};
use crate::error::{Error, Result};

/// File name suffix of per-run summaries.
pub const SUMMARY_FILE: &str = ".summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// One row of the long-format series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub run_id: String,
    pub t: f64,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub run_id: String,
    pub planner: String,
    pub solver: String,
    pub seconds: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format { path: path.to_path_buf(), msg: format!("{other:?}") },
    }
}

pub fn series_rows(log: &MissionLog) -> Vec<SeriesRow> {
    let id = &log.summary.run_id;
    let n = log.summary.total_targets;
    let mut rows = Vec::with_capacity(log.steps.len() * 6);
    for s in &log.steps {
        let ratio = (n > 0).then(|| s.samples as f64 / n as f64);
        for (metric, value) in [
            ("x", Some(s.x)),
            ("y", Some(s.y)),
            ("theta", Some(s.theta)),
            ("samples", Some(s.samples as f64)),
            ("distance", Some(s.distance)),
            ("ratio", ratio),
        ] {
            rows.push(SeriesRow { run_id: id.clone(), t: s.t, metric: metric.into(), value });
        }
    }
    rows
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let out = create(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().collect::<std::result::Result<Vec<R>, _>>().map_err(|e| csv_err(path, e))
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
}

/// Writes the series as long CSV or the summary as JSON to `path`.
pub fn export_results(log: &MissionLog, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ExportFormat::Csv => write_csv(path, &["run_id", "t", "metric", "value"], &series_rows(log)),
        ExportFormat::Json => write_json(path, &log.summary),
    }
}

pub fn read_series(path: impl AsRef<Path>) -> Result<Vec<SeriesRow>> {
    read_csv(path.as_ref())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<MissionSummary> {
    read_json(path.as_ref())
}

pub fn timing_rows(t: &TimingLog) -> Vec<TimingRow> {
    let planner = t.planner.map(|p| p.to_string()).unwrap_or_default();
    let mut rows = Vec::new();
    for (solver, values) in [("local", &t.local_solve_s), ("global", &t.global_solve_s), ("mcts", &t.mcts_solve_s)] {
        rows.extend(values.iter().map(|&seconds| TimingRow {
            run_id: t.run_id.clone(),
            planner: planner.clone(),
            solver: solver.into(),
            seconds,
        }));
    }
    rows
}

pub fn export_timings(t: &TimingLog, path: impl AsRef<Path>) -> Result<()> {
    write_csv(path.as_ref(), &["run_id", "planner", "solver", "seconds"], &timing_rows(t))
}

pub fn read_timings(path: impl AsRef<Path>) -> Result<Vec<TimingRow>> {
    read_csv(path.as_ref())
}

/// Writes all four per-run files into `dir` and returns the summary path.
pub fn export_run(out: &MissionOutput, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let id = &out.log.summary.run_id;
    export_results(&out.log, ExportFormat::Csv, dir.join(format!("{id}.csv")))?;
    write_json(&dir.join(format!("{id}.events.json")), &out.log.events)?;
    export_timings(&out.timings, dir.join(format!("{id}.timings.csv")))?;
    let summary = dir.join(format!("{id}{SUMMARY_FILE}"));
    export_results(&out.log, ExportFormat::Json, &summary)?;
    Ok(summary)
}

pub(crate) fn write_table<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    write_csv(path, header, rows)
}

pub(crate) fn write_json_file<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    write_json(path, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::{MissionSummary, PlannerKind, StepRecord};

    fn log(steps: Vec<StepRecord>, total: usize) -> MissionLog {
        MissionLog {
            summary: MissionSummary {
                run_id: "r1".into(),
                planner: PlannerKind::Himos,
                seed: 1,
                map: "m".into(),
                difficulty: None,
                total_targets: total,
                sampled: steps.last().map_or(0, |s| s.samples),
                ratio: None,
                final_t: 0.0,
                steps: steps.len(),
                distance: 0.0,
                global_calls: 0,
                local_cycles: 0,
            },
            steps,
            events: vec![],
        }
    }

    #[test]
    fn empty_log_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        export_results(&log(vec![], 3), ExportFormat::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "run_id,t,metric,value\n");
        assert!(read_series(&path).unwrap().is_empty());
    }

    #[test]
    fn series_round_trip() {
        let steps = vec![
            StepRecord { t: 0.0, x: 1.0, y: 2.0, theta: 0.1, samples: 0, distance: 0.0 },
            StepRecord { t: 0.5, x: 1.25, y: 2.0, theta: -0.3, samples: 2, distance: 0.25 },
        ];
        let dir = tempfile::tempdir().unwrap();
        for total in [0, 4] {
            let l = log(steps.clone(), total);
            let path = dir.path().join(format!("s{total}.csv"));
            export_results(&l, ExportFormat::Csv, &path).unwrap();
            assert_eq!(read_series(&path).unwrap(), series_rows(&l));
        }
        let l = log(steps, 4);
        let path = dir.path().join("s.json");
        export_results(&l, ExportFormat::Json, &path).unwrap();
        assert_eq!(read_summary(&path).unwrap(), l.summary);
    }

    #[test]
    fn io_error_carries_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = export_results(&log(vec![], 0), ExportFormat::Csv, blocker.join("sub/out.csv")).unwrap_err();
        assert_eq!(err.kind(), "io");
        assert!(err.to_string().contains("file"));
    }
}
