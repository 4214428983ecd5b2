//! Closed-loop conductance programming.
//!
//! [`vipi_program_cell`] runs a PI loop on the pulse duration and raises the
//! pulse amplitude every `n_c` iterations, so cells whose switching threshold
//! sits above the initial write voltage eventually respond.
//! [`pi_program_cell`] is the same loop at a fixed amplitude.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VipiConfig {
    pub k_p: f64,
    pub k_i: f64,
    /// Stop once `|target - measured| < epsilon`.
    pub epsilon: f64,
    /// Amplitude increment (V).
    pub delta: f64,
    /// Iterations between amplitude increments.
    pub n_c: usize,
    pub n_iter: usize,
    /// Clamp on the accumulated error.
    pub e_max: f64,
    pub v_delta_init: f64,
    /// Reads averaged per measurement.
    pub n_avg: usize,
    pub v_delta_max: f64,
}

impl Default for VipiConfig {
    fn default() -> Self {
        Self {
            k_p: 2.0,
            k_i: 0.1,
            epsilon: 0.02,
            delta: 0.02,
            n_c: 10,
            n_iter: 200,
            e_max: 1.0,
            v_delta_init: 0.08,
            n_avg: 4,
            v_delta_max: 0.50,
        }
    }
}

impl VipiConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.k_p,
            self.k_i,
            self.epsilon,
            self.delta,
            self.e_max,
            self.v_delta_init,
            self.v_delta_max,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("controller gains and tolerances must be positive".into()));
        }
        if self.n_c == 0 || self.n_iter == 0 || self.n_avg == 0 {
            return Err(Error::Config("n_c, n_iter and n_avg must be at least 1".into()));
        }
        if self.v_delta_init > self.v_delta_max {
            return Err(Error::Config(format!(
                "v_delta_init {} exceeds v_delta_max {}",
                self.v_delta_init, self.v_delta_max
            )));
        }
        Ok(())
    }

    /// Write amplitude used after `completed` iterations.
    pub fn voltage_after(&self, completed: usize) -> f64 {
        (self.v_delta_init + self.delta * (completed / self.n_c) as f64).min(self.v_delta_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vipi,
    Pi,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vipi" => Ok(Method::Vipi),
            "pi" => Ok(Method::Pi),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected vipi or pi)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Vipi => "vipi",
            Method::Pi => "pi",
        })
    }
}

/// One issued write.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub c_pulse: f64,
    pub v_delta: f64,
    /// Accumulated error after clamping, as used for this pulse.
    pub e_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub x: usize,
    pub y: usize,
    pub target: f64,
    pub achieved: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_v_delta: f64,
    /// Measured error `target - measured` at each iteration.
    pub error_trace: Vec<f64>,
    pub pulses: Vec<PulseRecord>,
}

/// Mean of `n_avg` one-hot readouts of cell `(x, y)`.
pub fn read_weight<B: Backend + ?Sized>(h: &mut B, x: usize, y: usize, n_avg: usize) -> Result<f64> {
    if n_avg == 0 {
        return Err(Error::Config("n_avg must be at least 1".into()));
    }
    let (rows, cols) = h.dims();
    if x >= rows || y >= cols {
        return Err(Error::Range(format!("cell ({x}, {y}) outside {rows}x{cols} crossbar")));
    }
    let mut input = vec![0.0; rows];
    input[x] = 1.0;
    let mut sum = 0.0;
    for _ in 0..n_avg {
        sum += h.infer(&input)?[y];
    }
    Ok(sum / n_avg as f64)
}

fn program_cell<B: Backend + ?Sized>(
    h: &mut B,
    x: usize,
    y: usize,
    target: f64,
    cfg: &VipiConfig,
    method: Method,
) -> Result<ProgramReport> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Range(format!("target {target} outside [0, 1]")));
    }
    let mut report = ProgramReport {
        x,
        y,
        target,
        achieved: f64::NAN,
        iterations: 0,
        converged: false,
        final_v_delta: cfg.v_delta_init,
        error_trace: Vec::new(),
        pulses: Vec::new(),
    };
    let mut e_acc = 0.0;
    let mut v_delta = cfg.v_delta_init;
    for i in 1..=cfg.n_iter {
        let phi = read_weight(h, x, y, cfg.n_avg)?;
        let e = target - phi;
        report.iterations = i;
        report.achieved = phi;
        report.error_trace.push(e);
        if e.abs() < cfg.epsilon {
            report.converged = true;
            break;
        }
        e_acc = (e_acc + e).clamp(-cfg.e_max, cfg.e_max);
        let c_pulse = cfg.k_p * e + cfg.k_i * e_acc;
        h.write_weight(x, y, c_pulse, v_delta)?;
        report.pulses.push(PulseRecord {
            c_pulse,
            v_delta,
            e_acc,
        });
        if method == Method::Vipi && i % cfg.n_c == 0 {
            v_delta = cfg.voltage_after(i);
        }
    }
    report.final_v_delta = v_delta;
    if !report.converged {
        // The last write has not been measured yet.
        report.achieved = read_weight(h, x, y, cfg.n_avg)?;
    }
    Ok(report)
}

/// Voltage-incremental PI programming of one cell.
pub fn vipi_program_cell<B: Backend + ?Sized>(
    h: &mut B,
    x: usize,
    y: usize,
    target: f64,
    cfg: &VipiConfig,
) -> Result<ProgramReport> {
    program_cell(h, x, y, target, cfg, Method::Vipi)
}

/// Fixed-amplitude PI programming of one cell.
pub fn pi_program_cell<B: Backend + ?Sized>(
    h: &mut B,
    x: usize,
    y: usize,
    target: f64,
    cfg: &VipiConfig,
) -> Result<ProgramReport> {
    program_cell(h, x, y, target, cfg, Method::Pi)
}

pub fn program_cell_with<B: Backend + ?Sized>(
    h: &mut B,
    x: usize,
    y: usize,
    target: f64,
    cfg: &VipiConfig,
    method: Method,
) -> Result<ProgramReport> {
    program_cell(h, x, y, target, cfg, method)
}

/// Targets for array programming; `None` cells are left alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGrid {
    pub cells: Vec<Vec<Option<f64>>>,
}

impl TargetGrid {
    pub fn full(targets: &[Vec<f64>]) -> Self {
        Self {
            cells: targets.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect(),
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            cells: vec![vec![None; cols]; rows],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, target: f64) {
        self.cells[x][y] = Some(target);
    }

    /// Defined cells in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().enumerate().filter_map(move |(y, t)| t.map(|t| (x, y, t))))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, dims: (usize, usize)) -> Result<()> {
        if self.cells.len() > dims.0 || self.cells.iter().any(|r| r.len() > dims.1) {
            return Err(Error::Dimension {
                expected: dims.0 * dims.1,
                got: self.cells.iter().map(Vec::len).sum(),
            });
        }
        if let Some((x, y, t)) = self.iter().find(|(_, _, t)| !(0.0..=1.0).contains(t)) {
            return Err(Error::Range(format!("target {t} for cell ({x}, {y}) outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedCell {
    pub x: usize,
    pub y: usize,
    pub target: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayReport {
    pub method: Method,
    /// First pass, row-major.
    pub cells: Vec<ProgramReport>,
    /// Verification after the first pass.
    pub verified_first: Vec<VerifiedCell>,
    /// Corrective pass over cells whose verified error exceeded epsilon.
    pub repairs: Vec<ProgramReport>,
    /// Verification after the corrective pass.
    pub verified: Vec<VerifiedCell>,
    /// Σ|measured − target| after the first pass.
    pub e_tot_first: f64,
    /// Σ|measured − target| after the corrective pass.
    pub e_tot: f64,
    /// Fraction of cells whose last programming attempt converged.
    pub convergence_fraction: f64,
    /// Fraction of cells within epsilon at final verification.
    pub within_epsilon_fraction: f64,
}

impl ArrayReport {
    /// Last programming report of each cell (repair if any, else first pass), row-major.
    pub fn final_reports(&self) -> Vec<&ProgramReport> {
        self.cells
            .iter()
            .map(|c| {
                self.repairs
                    .iter()
                    .find(|r| r.x == c.x && r.y == c.y)
                    .unwrap_or(c)
            })
            .collect()
    }

    /// Coordinates of cells whose last programming attempt converged.
    pub fn converged_cells(&self) -> Vec<(usize, usize)> {
        self.final_reports()
            .into_iter()
            .filter(|r| r.converged)
            .map(|r| (r.x, r.y))
            .collect()
    }

    /// Measured weights after the corrective pass, `None` where no target was set.
    pub fn measured_grid(&self, rows: usize, cols: usize) -> Vec<Vec<Option<f64>>> {
        let mut grid = vec![vec![None; cols]; rows];
        for v in &self.verified {
            grid[v.x][v.y] = Some(v.measured);
        }
        grid
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-iteration error traces as long-format CSV: `pass,x,y,iteration,error`.
    pub fn write_traces_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pass", "x", "y", "iteration", "error"])?;
        for (pass, reports) in [("first", &self.cells), ("repair", &self.repairs)] {
            for r in reports {
                for (i, e) in r.error_trace.iter().enumerate() {
                    w.write_record([
                        pass.to_string(),
                        r.x.to_string(),
                        r.y.to_string(),
                        (i + 1).to_string(),
                        format!("{e:.9}"),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn verify<B: Backend + ?Sized>(h: &mut B, targets: &TargetGrid, n_avg: usize) -> Result<Vec<VerifiedCell>> {
    targets
        .iter()
        .map(|(x, y, target)| {
            Ok(VerifiedCell {
                x,
                y,
                target,
                measured: read_weight(h, x, y, n_avg)?,
            })
        })
        .collect()
}

fn e_tot(cells: &[VerifiedCell]) -> f64 {
    cells.iter().map(|c| (c.measured - c.target).abs()).sum()
}

fn aborted(error: Error, partial: &ArrayReport) -> Error {
    Error::Aborted {
        stage: "program_array".into(),
        partial: Box::new(serde_json::to_value(partial).unwrap_or_default()),
        source: Box::new(error),
    }
}

/// Programs every defined target in row-major order, verifies, then re-programs
/// any cell whose verified error exceeds epsilon and verifies again.
///
/// Backend failures abort with [`Error::Aborted`] carrying the partial report.
pub fn program_array<B: Backend + ?Sized>(
    h: &mut B,
    targets: &TargetGrid,
    cfg: &VipiConfig,
    method: Method,
) -> Result<ArrayReport> {
    cfg.validate()?;
    targets.validate(h.dims())?;
    let mut report = ArrayReport {
        method,
        cells: Vec::new(),
        verified_first: Vec::new(),
        repairs: Vec::new(),
        verified: Vec::new(),
        e_tot_first: 0.0,
        e_tot: 0.0,
        convergence_fraction: 0.0,
        within_epsilon_fraction: 0.0,
    };
    for (x, y, t) in targets.iter() {
        let r = program_cell(h, x, y, t, cfg, method).map_err(|e| aborted(e, &report))?;
        report.cells.push(r);
    }
    report.verified_first = verify(h, targets, cfg.n_avg).map_err(|e| aborted(e, &report))?;
    report.e_tot_first = e_tot(&report.verified_first);

    let stale: Vec<VerifiedCell> = report
        .verified_first
        .iter()
        .filter(|v| (v.measured - v.target).abs() > cfg.epsilon)
        .cloned()
        .collect();
    for v in stale {
        let r = program_cell(h, v.x, v.y, v.target, cfg, method).map_err(|e| aborted(e, &report))?;
        report.repairs.push(r);
    }
    report.verified = verify(h, targets, cfg.n_avg).map_err(|e| aborted(e, &report))?;
    report.e_tot = e_tot(&report.verified);

    let n = report.cells.len().max(1) as f64;
    report.convergence_fraction = report.final_reports().iter().filter(|r| r.converged).count() as f64 / n;
    report.within_epsilon_fraction = report
        .verified
        .iter()
        .filter(|v| (v.measured - v.target).abs() < cfg.epsilon)
        .count() as f64
        / n;
    Ok(report)
}
