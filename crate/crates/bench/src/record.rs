//! Per-step CSV rows and the JSON run summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use emacflow_core::quantities::{estimate_period, StepQuantities};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;

pub const CSV_HEADER: &str = "t,drag,lift,drag_direct,lift_direct,kinetic_energy,momentum_x,momentum_y,angular_momentum,div_l2,newton_iters,factorizations,residual";

pub const SUMMARY_KEYS: [&str; 13] = [
    "status",
    "t_max",
    "drag_mean",
    "drag_min",
    "drag_max",
    "period",
    "period_dev",
    "cycles",
    "div_linf_l2",
    "newton_steps_total",
    "factorizations_total",
    "wall_time_s",
    "config_echo",
];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: unexpected header (expected {CSV_HEADER})")]
    Header { path: PathBuf },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub drag: f64,
    pub lift: f64,
    pub drag_direct: f64,
    pub lift_direct: f64,
    pub kinetic_energy: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub angular_momentum: f64,
    pub div_l2: f64,
    pub newton_iters: usize,
    pub factorizations: usize,
    pub residual: f64,
}

impl From<&StepQuantities> for Row {
    fn from(q: &StepQuantities) -> Self {
        Row {
            t: q.t,
            drag: q.drag,
            lift: q.lift,
            drag_direct: q.drag_direct,
            lift_direct: q.lift_direct,
            kinetic_energy: q.kinetic_energy,
            momentum_x: q.momentum[0],
            momentum_y: q.momentum[1],
            angular_momentum: q.angular_momentum,
            div_l2: q.div_l2,
            newton_iters: q.newton_iters,
            factorizations: q.factorizations,
            residual: q.residual,
        }
    }
}

/// CSV file written row by row.
pub struct CsvLog {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvLog {
    /// Creates (truncates) `path` and writes the header plus `rows`.
    pub fn create(path: &Path, rows: &[Row]) -> Result<Self, RecordError> {
        let file = File::create(path).map_err(|source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut log = CsvLog {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        };
        for r in rows {
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, row: &Row) -> Result<(), RecordError> {
        self.writer.serialize(row).map_err(|source| RecordError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn flush(&mut self) -> Result<(), RecordError> {
        self.writer.flush().map_err(|source| RecordError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>, RecordError> {
    let csv_err = |source| RecordError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(RecordError::Header {
            path: path.to_path_buf(),
        });
    }
    reader
        .deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .map_err(csv_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `completed` or `solver_failed`.
    pub status: String,
    pub t_max: f64,
    /// Drag statistics over the evaluation window, if reached.
    pub drag_mean: Option<f64>,
    pub drag_min: Option<f64>,
    pub drag_max: Option<f64>,
    /// Only set when at least two cycles fit into the evaluated window.
    pub period: Option<f64>,
    pub period_dev: Option<f64>,
    pub cycles: Option<usize>,
    /// Largest `div_l2` over all steps.
    pub div_linf_l2: f64,
    pub newton_steps_total: usize,
    pub factorizations_total: usize,
    pub wall_time_s: f64,
    pub config_echo: RunConfig,
}

pub const STATUS_COMPLETED: &str = "completed";
pub const STATUS_FAILED: &str = "solver_failed";

impl Summary {
    /// Summary of a run from its rows alone. A run whose last row falls
    /// short of `t_end` is reported as failed.
    pub fn from_rows(rows: &[Row], config: &RunConfig, wall_time_s: f64) -> Self {
        let t_max = rows.last().map_or(0.0, |r| r.t);
        let completed = t_max >= config.t_end - 0.5 * config.dt;
        let (w0, w1) = config.window;
        let tol = 1e-6 * config.dt;
        let in_window: Vec<&Row> = rows
            .iter()
            .filter(|r| r.t >= w0 - tol && r.t <= w1 + tol)
            .collect();
        let drag: Vec<f64> = in_window.iter().map(|r| r.drag).collect();
        let (drag_mean, drag_min, drag_max) = if drag.is_empty() {
            (None, None, None)
        } else {
            (
                Some(drag.iter().sum::<f64>() / drag.len() as f64),
                Some(drag.iter().copied().fold(f64::INFINITY, f64::min)),
                Some(drag.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            )
        };
        // A failed run is evaluated on the part of the window it reached.
        let end = w1.min(t_max);
        let estimate = if end > w0 {
            let t: Vec<f64> = in_window.iter().map(|r| r.t).collect();
            let l: Vec<f64> = in_window.iter().map(|r| r.lift).collect();
            estimate_period(&t, &drag, &l, (w0, end)).ok()
        } else {
            None
        };
        let valid = estimate.filter(|e| e.valid);
        Summary {
            status: if completed { STATUS_COMPLETED } else { STATUS_FAILED }.to_string(),
            t_max,
            drag_mean,
            drag_min,
            drag_max,
            period: valid.map(|e| e.period),
            period_dev: valid.map(|e| e.deviation),
            cycles: estimate.map(|e| e.cycles),
            div_linf_l2: rows.iter().map(|r| r.div_l2).fold(0.0, f64::max),
            newton_steps_total: rows.iter().map(|r| r.newton_iters).sum(),
            factorizations_total: rows.iter().map(|r| r.factorizations).sum(),
            wall_time_s,
            config_echo: config.clone(),
        }
    }

    pub fn completed(&self) -> bool {
        self.status == STATUS_COMPLETED
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        let io = |source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut text = serde_json::to_string_pretty(self).map_err(|source| RecordError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        std::fs::write(path, text).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| RecordError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
