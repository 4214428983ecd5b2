//! End-to-end experiments and their preprocessing.

pub mod config;
pub mod digits;
pub mod pca;
pub mod robot;
pub mod scaling;
pub mod split;
pub mod trajectory;

pub use config::ExperimentConfig;
pub use digits::{run_digits_experiment, threshold_sweep, DigitsReport, ThresholdSweep};
pub use pca::{pca_project, Pca};
pub use robot::{run_robot_experiment, RobotReport};
pub use scaling::{min_max_rescale, ColumnMinMax, MinMax};
pub use split::train_test_split;
pub use trajectory::{generate_trajectory_dataset, Trajectory, TrajectoryRow};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::BackendHandle;
use crate::device::CrossbarModel;
use crate::error::{Error, Result};
use crate::programming::{ArrayReport, Method};

/// Crossbar geometry used by every experiment.
pub const CROSSBAR: (usize, usize) = (8, 8);

/// Name of the one report field that varies between identical runs.
pub const TIMESTAMP_FIELD: &str = "generated_at_unix";

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Per-channel and pooled root-mean-square error.
pub fn rmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let m = truth.first().map_or(0, Vec::len);
    let n = truth.len().max(1) as f64;
    let mut per = vec![0.0; m];
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..m {
            per[k] += (p[k] - t[k]).powi(2);
        }
    }
    let overall = (per.iter().sum::<f64>() / (n * m.max(1) as f64)).sqrt();
    (per.into_iter().map(|s| (s / n).sqrt()).collect(), overall)
}

/// Opens the configured backend on a fresh seeded crossbar.
pub fn open_backend(cfg: &ExperimentConfig) -> Result<BackendHandle> {
    let model = CrossbarModel::new(CROSSBAR.0, CROSSBAR.1, cfg.variability, cfg.seed)?;
    cfg.backend.open(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub x: usize,
    pub y: usize,
    pub target: f64,
    pub measured: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_v_delta: f64,
}

/// Programming outcome without the per-iteration traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgrammingSummary {
    pub method: Method,
    pub e_tot_first: f64,
    pub e_tot: f64,
    pub convergence_fraction: f64,
    pub within_epsilon_fraction: f64,
    pub repaired_cells: usize,
    pub cells: Vec<CellSummary>,
}

impl From<&ArrayReport> for ProgrammingSummary {
    fn from(r: &ArrayReport) -> Self {
        let cells = r
            .final_reports()
            .into_iter()
            .zip(&r.verified)
            .map(|(c, v)| CellSummary {
                x: c.x,
                y: c.y,
                target: c.target,
                measured: v.measured,
                iterations: c.iterations,
                converged: c.converged,
                final_v_delta: c.final_v_delta,
            })
            .collect();
        Self {
            method: r.method,
            e_tot_first: r.e_tot_first,
            e_tot: r.e_tot,
            convergence_fraction: r.convergence_fraction,
            within_epsilon_fraction: r.within_epsilon_fraction,
            repaired_cells: r.repairs.len(),
            cells,
        }
    }
}

/// Collects stage outputs so a failure can be reported with everything
/// finished up to that point.
#[derive(Debug, Default)]
pub(crate) struct Partial(serde_json::Map<String, serde_json::Value>);

impl Partial {
    pub(crate) fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.0
            .insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub(crate) fn guard<T>(&self, stage: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Config(_) | Error::DegenerateData(_) | Error::Ingestion { .. } => e,
            other => Error::Aborted {
                stage: stage.into(),
                partial: Box::new(serde_json::Value::Object(self.0.clone())),
                source: Box::new(other),
            },
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
