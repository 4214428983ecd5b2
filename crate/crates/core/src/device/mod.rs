//! Behavioral model of a memristor crossbar.
//!
//! Weights are normalized conductances in `[w_min, w_max]` (default `[0, 1]`).
//! A cell only moves when the voltage across it exceeds its switching
//! threshold, at a rate proportional to the overdrive and the pulse duration.
//! Writes use the half-select scheme, so cells sharing the target's row or
//! column see half the write voltage; whether they are disturbed depends on
//! their own threshold.

mod map_io;

pub use map_io::{format_sig9, read_grid_csv, write_grid_csv};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest admissible switching threshold. Reads are issued at 0.05 V at most.
pub const MIN_THRESHOLD: f64 = 0.06;
/// Shortest and longest pulse the driver can emit, in milliseconds.
pub const PULSE_MIN_MS: f64 = 0.01;
pub const PULSE_MAX_MS: f64 = 10.0;
/// Physical conductance range backing the normalized weight, in siemens.
pub const G_MIN: f64 = 1e-6;
pub const G_MAX: f64 = 100e-6;

/// A single device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorCell {
    pub weight: f64,
    /// Switching threshold (V).
    pub v_th: f64,
    /// Weight change per volt of overdrive per millisecond.
    pub k_update: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl MemristorCell {
    pub fn new(weight: f64, v_th: f64, k_update: f64) -> Result<Self> {
        if v_th.is_nan() || v_th < MIN_THRESHOLD {
            return Err(Error::Config(format!(
                "switching threshold {v_th} V is below the {MIN_THRESHOLD} V minimum"
            )));
        }
        if !k_update.is_finite() || k_update < 0.0 {
            return Err(Error::Config(format!("invalid update rate {k_update}")));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Range(format!("weight {weight} outside [0, 1]")));
        }
        Ok(Self {
            weight,
            v_th,
            k_update,
            w_min: 0.0,
            w_max: 1.0,
        })
    }

    /// Physical conductance in siemens.
    pub fn conductance(&self) -> f64 {
        G_MIN + self.weight * (G_MAX - G_MIN)
    }

    /// Returns the cell after a pulse of `v_applied` volts lasting `duration` ms.
    pub fn pulsed(&self, v_applied: f64, duration: f64) -> Self {
        let mut next = *self;
        next.pulse(v_applied, duration);
        next
    }

    pub(crate) fn pulse(&mut self, v_applied: f64, duration: f64) {
        let overdrive = v_applied.abs() - self.v_th;
        if overdrive <= 0.0 || duration <= 0.0 {
            return;
        }
        let delta = v_applied.signum() * self.k_update * overdrive * duration;
        self.weight = (self.weight + delta).clamp(self.w_min, self.w_max);
    }
}

/// Free-function form of [`MemristorCell::pulsed`].
pub fn apply_pulse(cell: &MemristorCell, v_applied: f64, duration: f64) -> MemristorCell {
    cell.pulsed(v_applied, duration)
}

/// Device-to-device spread and read-path non-idealities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySpec {
    pub v_th_mean: f64,
    pub v_th_sd: f64,
    pub v_th_clip: (f64, f64),
    pub k_mean: f64,
    pub k_sd: f64,
    /// Standard deviation of additive readout noise, in weight units.
    pub read_noise_sd: f64,
    /// ADC resolution; `None` reads without quantization.
    pub adc_bits: Option<u32>,
}

impl Default for VariabilitySpec {
    fn default() -> Self {
        Self {
            v_th_mean: 0.12,
            v_th_sd: 0.05,
            v_th_clip: (0.06, 0.40),
            k_mean: 0.5,
            k_sd: 0.05,
            read_noise_sd: 0.002,
            adc_bits: Some(12),
        }
    }
}

impl VariabilitySpec {
    /// Every cell at `v_th`, identical update rate, noise-free ideal readout.
    pub fn ideal(v_th: f64) -> Self {
        Self {
            v_th_mean: v_th,
            v_th_sd: 0.0,
            v_th_clip: (MIN_THRESHOLD.min(v_th), 0.40f64.max(v_th)),
            k_sd: 0.0,
            read_noise_sd: 0.0,
            adc_bits: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.v_th_clip;
        let finite = [
            self.v_th_mean,
            self.v_th_sd,
            lo,
            hi,
            self.k_mean,
            self.k_sd,
            self.read_noise_sd,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("variability parameters must be finite".into()));
        }
        if lo < MIN_THRESHOLD {
            return Err(Error::Config(format!(
                "v_th_clip lower bound {lo} V is below {MIN_THRESHOLD} V"
            )));
        }
        if hi < lo {
            return Err(Error::Config(format!("empty v_th_clip [{lo}, {hi}]")));
        }
        if self.v_th_sd < 0.0 || self.k_sd < 0.0 || self.read_noise_sd < 0.0 {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        if self.k_mean <= 0.0 {
            return Err(Error::Config("k_mean must be positive".into()));
        }
        if self.adc_bits == Some(0) || self.adc_bits.is_some_and(|b| b > 52) {
            return Err(Error::Config("adc_bits must lie in 1..=52".into()));
        }
        Ok(())
    }
}

/// A write request: signed pulse duration (ms, sign = polarity) and amplitude (V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseCommand {
    pub x: usize,
    pub y: usize,
    pub c_pulse: f64,
    pub v_delta: f64,
}

impl PulseCommand {
    /// Signed effective voltage across the target.
    pub fn voltage(&self) -> f64 {
        if self.c_pulse < 0.0 {
            -self.v_delta
        } else {
            self.v_delta
        }
    }

    /// Pulse duration after clamping to what the driver can emit.
    pub fn duration(&self) -> f64 {
        self.c_pulse.abs().clamp(PULSE_MIN_MS, PULSE_MAX_MS)
    }
}

/// Grid of cells plus the seeded randomness source used for construction and reads.
#[derive(Debug, Clone)]
pub struct CrossbarModel {
    rows: usize,
    cols: usize,
    cells: Vec<MemristorCell>,
    variability: VariabilitySpec,
    seed: u64,
    rng: ChaCha8Rng,
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd == 0.0 {
        return mean.clamp(lo, hi);
    }
    let dist = Normal::new(mean, sd).expect("validated sd");
    for _ in 0..10_000 {
        let v = dist.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    // Only reachable when the clip window sits far in a tail.
    mean.clamp(lo, hi)
}

impl CrossbarModel {
    pub fn new(rows: usize, cols: usize, variability: VariabilitySpec, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("invalid crossbar dimensions {rows}x{cols}")));
        }
        variability.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = variability.v_th_clip;
        let k_floor = 0.01 * variability.k_mean;
        let mut cells = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v_th = truncated_normal(&mut rng, variability.v_th_mean, variability.v_th_sd, lo, hi);
            let k_update = truncated_normal(
                &mut rng,
                variability.k_mean,
                variability.k_sd,
                k_floor,
                f64::INFINITY,
            );
            let weight = rng.random_range(0.05..=0.15);
            cells.push(MemristorCell::new(weight, v_th, k_update)?);
        }
        Ok(Self {
            rows,
            cols,
            cells,
            variability,
            seed,
            rng,
        })
    }

    /// Default 8×8 crossbar.
    pub fn with_seed(variability: VariabilitySpec, seed: u64) -> Result<Self> {
        Self::new(8, 8, variability, seed)
    }

    /// Restores the fresh state drawn from the stored seed, including the read-noise stream.
    pub fn reset(&mut self) {
        *self = Self::new(self.rows, self.cols, self.variability, self.seed)
            .expect("parameters were validated at construction");
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variability(&self) -> &VariabilitySpec {
        &self.variability
    }

    pub fn cell(&self, x: usize, y: usize) -> &MemristorCell {
        &self.cells[x * self.cols + y]
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.cell(x, y).weight
    }

    /// Replaces a cell, enforcing the cell invariants.
    pub fn set_cell(&mut self, x: usize, y: usize, cell: MemristorCell) -> Result<()> {
        self.check_coords(x, y)?;
        let checked = MemristorCell::new(cell.weight, cell.v_th, cell.k_update)?;
        if !(cell.w_min <= cell.weight && cell.weight <= cell.w_max) {
            return Err(Error::Range(format!("weight {} outside its bounds", cell.weight)));
        }
        self.cells[x * self.cols + y] = MemristorCell {
            w_min: cell.w_min,
            w_max: cell.w_max,
            ..checked
        };
        Ok(())
    }

    /// Row-major copy of all weights.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.cells
            .chunks(self.cols)
            .map(|row| row.iter().map(|c| c.weight).collect())
            .collect()
    }

    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        self.cells
            .chunks(self.cols)
            .map(|row| row.iter().map(|c| c.v_th).collect())
            .collect()
    }

    /// Smallest threshold in the array.
    pub fn min_threshold(&self) -> f64 {
        self.cells.iter().map(|c| c.v_th).fold(f64::INFINITY, f64::min)
    }

    fn check_coords(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.rows || y >= self.cols {
            return Err(Error::Protocol(format!(
                "cell ({x}, {y}) outside {}x{} crossbar",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Applies one half-select write episode.
    pub fn write_pulse(&mut self, cmd: &PulseCommand) -> Result<()> {
        self.check_coords(cmd.x, cmd.y)?;
        if !cmd.c_pulse.is_finite() || !cmd.v_delta.is_finite() || cmd.v_delta < 0.0 {
            return Err(Error::Range(format!(
                "invalid pulse c_pulse={} v_delta={}",
                cmd.c_pulse, cmd.v_delta
            )));
        }
        let v = cmd.voltage();
        let tau = cmd.duration();
        let cols = self.cols;
        for j in 0..cols {
            let v_cell = if j == cmd.y { v } else { 0.5 * v };
            self.cells[cmd.x * cols + j].pulse(v_cell, tau);
        }
        for i in (0..self.rows).filter(|&i| i != cmd.x) {
            self.cells[i * cols + cmd.y].pulse(0.5 * v, tau);
        }
        Ok(())
    }

    /// Noise-free multiply-accumulate `o_j = Σ_i w(i,j)·x_i`.
    pub fn ideal_mac(&self, x_norm: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.cells.chunks(self.cols).zip(x_norm) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c.weight * xi;
            }
        }
        out
    }

    fn check_input(&self, x_norm: &[f64]) -> Result<()> {
        if x_norm.len() != self.rows {
            return Err(Error::Dimension {
                expected: self.rows,
                got: x_norm.len(),
            });
        }
        if let Some(v) = x_norm.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("input component {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// Noisy, quantized readout. Consumes read-noise draws but never touches weights.
    pub fn read_mac(&mut self, x_norm: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_norm)?;
        let mut out = self.ideal_mac(x_norm);
        let sd = self.variability.read_noise_sd;
        if sd > 0.0 {
            let noise = Normal::new(0.0, sd).expect("validated sd");
            for o in out.iter_mut() {
                *o += noise.sample(&mut self.rng);
            }
        }
        if let Some(bits) = self.variability.adc_bits {
            let full_scale = self.rows as f64;
            let levels = ((1u64 << bits) - 1) as f64;
            let step = full_scale / levels;
            for o in out.iter_mut() {
                *o = (o.clamp(0.0, full_scale) / step).round() * step;
            }
        }
        Ok(out)
    }

    /// Flat `key=value` description of the construction parameters.
    pub fn metadata(&self) -> String {
        let v = &self.variability;
        let adc = v.adc_bits.map_or("none".to_string(), |b| b.to_string());
        format!(
            "seed={}\nrows={}\ncols={}\nv_th_mean={}\nv_th_sd={}\nv_th_clip_lo={}\nv_th_clip_hi={}\n\
             k_mean={}\nk_sd={}\nread_noise_sd={}\nadc_bits={}\n",
            self.seed,
            self.rows,
            self.cols,
            v.v_th_mean,
            v.v_th_sd,
            v.v_th_clip.0,
            v.v_th_clip.1,
            v.k_mean,
            v.k_sd,
            v.read_noise_sd,
            adc
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(weight: f64, v_th: f64, k: f64) -> MemristorCell {
        MemristorCell {
            weight,
            v_th,
            k_update: k,
            w_min: 0.0,
            w_max: 1.0,
        }
    }

    #[test]
    fn subthreshold_pulse_is_a_no_op() {
        let c = cell(0.4, 0.05, 0.5);
        assert_eq!(apply_pulse(&c, 0.03, 5.0), c);
        assert_eq!(apply_pulse(&c, -0.05, 5.0), c);
    }

    #[test]
    fn update_law_scalar_evaluation() {
        // 0.20 + 0.5 * (0.20 - 0.05) * 0.2
        let c = apply_pulse(&cell(0.20, 0.05, 0.5), 0.20, 0.2);
        assert!((c.weight - 0.215).abs() < 1e-12);
        let d = apply_pulse(&cell(0.20, 0.05, 0.5), -0.20, 0.2);
        assert!((d.weight - 0.185).abs() < 1e-12);
    }

    #[test]
    fn saturates_exactly_at_bounds() {
        assert_eq!(apply_pulse(&cell(0.99, 0.06, 0.5), 1.0, 10.0).weight, 1.0);
        assert_eq!(apply_pulse(&cell(0.01, 0.06, 0.5), -1.0, 10.0).weight, 0.0);
    }

    #[test]
    fn half_voltage_disturb_scalar() {
        // Neighbor sees 0.12 / 2 = 0.06 V against a 0.055 V threshold.
        let c = apply_pulse(&cell(0.3, 0.055, 0.5), 0.06, 1.0);
        assert!((c.weight - (0.3 + 0.5 * 0.005 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap();
        let b = CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap();
        assert_eq!(a.cells, b.cells);
        let c = CrossbarModel::with_seed(VariabilitySpec::default(), 2).unwrap();
        assert_ne!(a.cells, c.cells);
    }

    #[test]
    fn zero_sd_gives_constant_threshold() {
        let var = VariabilitySpec {
            v_th_sd: 0.0,
            ..Default::default()
        };
        let m = CrossbarModel::with_seed(var, 3).unwrap();
        assert!(m.cells.iter().all(|c| c.v_th == 0.12));
    }

    #[test]
    fn thresholds_respect_clip_window() {
        let m = CrossbarModel::with_seed(VariabilitySpec::default(), 7).unwrap();
        assert_eq!(m.cells.len(), 64);
        for c in &m.cells {
            assert!((0.06..=0.40).contains(&c.v_th));
            assert!((0.05..=0.15).contains(&c.weight));
            assert!(c.k_update >= 0.005);
        }
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        assert!(matches!(
            CrossbarModel::new(0, 8, VariabilitySpec::default(), 0),
            Err(Error::Config(_))
        ));
        let bad = VariabilitySpec {
            v_th_clip: (0.05, 0.4),
            ..Default::default()
        };
        assert!(matches!(CrossbarModel::with_seed(bad, 0), Err(Error::Config(_))));
        let bad = VariabilitySpec {
            adc_bits: Some(0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = VariabilitySpec {
            read_noise_sd: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(MemristorCell::new(0.5, 0.055, 0.5).is_err());
    }

    #[test]
    fn low_write_voltage_only_moves_target() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.06), 4).unwrap();
        let before = m.weights();
        m.write_pulse(&PulseCommand { x: 2, y: 3, c_pulse: 2.0, v_delta: 0.08 })
            .unwrap();
        let after = m.weights();
        for i in 0..8 {
            for j in 0..8 {
                if (i, j) == (2, 3) {
                    assert!(after[i][j] > before[i][j]);
                } else {
                    assert_eq!(after[i][j], before[i][j]);
                }
            }
        }
    }

    #[test]
    fn zero_duration_is_clamped_to_minimum() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.10), 4).unwrap();
        let before = m.weights();
        m.write_pulse(&PulseCommand { x: 0, y: 0, c_pulse: 0.0, v_delta: 0.09 })
            .unwrap();
        assert_eq!(m.weights(), before);

        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.06), 4).unwrap();
        let w0 = m.weight(0, 0);
        m.write_pulse(&PulseCommand { x: 0, y: 0, c_pulse: 0.0, v_delta: 0.16 })
            .unwrap();
        assert!((m.weight(0, 0) - (w0 + 0.5 * 0.10 * PULSE_MIN_MS)).abs() < 1e-12);
    }

    #[test]
    fn neighbors_in_row_and_column_are_disturbed_above_threshold() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.10), 5).unwrap();
        let neighbor = MemristorCell::new(0.3, 0.065, 0.5).unwrap();
        m.set_cell(1, 6, neighbor).unwrap();
        m.set_cell(4, 2, neighbor).unwrap();
        m.set_cell(4, 6, neighbor).unwrap();
        m.write_pulse(&PulseCommand { x: 1, y: 2, c_pulse: 0.5, v_delta: 0.14 })
            .unwrap();
        // Same row and same column: 0.07 V against 0.065 V.
        let expected = 0.3 + 0.5 * 0.005 * 0.5;
        assert!((m.weight(1, 6) - expected).abs() < 1e-12);
        assert!((m.weight(4, 2) - expected).abs() < 1e-12);
        // Unselected row and column.
        assert_eq!(m.weight(4, 6), 0.3);
    }

    #[test]
    fn write_rejects_bad_coordinates() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::default(), 0).unwrap();
        let err = m.write_pulse(&PulseCommand { x: 9, y: 0, c_pulse: 1.0, v_delta: 0.1 });
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    #[test]
    fn one_hot_ideal_read_returns_row() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.1), 9).unwrap();
        let mut x = vec![0.0; 8];
        x[5] = 1.0;
        let out = m.read_mac(&x).unwrap();
        assert_eq!(out, m.weights()[5]);
    }

    #[test]
    fn saturated_array_reads_row_count() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::ideal(0.1), 9).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                m.set_cell(x, y, MemristorCell::new(1.0, 0.1, 0.5).unwrap()).unwrap();
            }
        }
        assert!(m.read_mac(&[1.0; 8]).unwrap().iter().all(|&o| o == 8.0));
    }

    #[test]
    fn read_validates_input() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::default(), 0).unwrap();
        assert!(matches!(m.read_mac(&[0.0; 3]), Err(Error::Dimension { expected: 8, got: 3 })));
        let mut x = [0.0; 8];
        x[0] = 1.5;
        assert!(matches!(m.read_mac(&x), Err(Error::Range(_))));
    }

    #[test]
    fn reset_restores_fresh_state_and_noise_stream() {
        let mut m = CrossbarModel::with_seed(VariabilitySpec::default(), 11).unwrap();
        let fresh = m.weights();
        let first = m.read_mac(&[0.5; 8]).unwrap();
        m.write_pulse(&PulseCommand { x: 0, y: 0, c_pulse: 5.0, v_delta: 0.4 })
            .unwrap();
        assert_ne!(m.weights(), fresh);
        m.reset();
        assert_eq!(m.weights(), fresh);
        assert_eq!(m.read_mac(&[0.5; 8]).unwrap(), first);
    }

    #[test]
    fn pulse_command_polarity_and_clamp() {
        let c = PulseCommand { x: 0, y: 0, c_pulse: -20.0, v_delta: 0.1 };
        assert_eq!(c.voltage(), -0.1);
        assert_eq!(c.duration(), PULSE_MAX_MS);
        let c = PulseCommand { x: 0, y: 0, c_pulse: 0.0, v_delta: 0.1 };
        assert_eq!(c.voltage(), 0.1);
        assert_eq!(c.duration(), PULSE_MIN_MS);
    }

    #[test]
    fn conductance_mapping() {
        let c = MemristorCell::new(1.0, 0.1, 0.5).unwrap();
        assert!((c.conductance() - 100e-6).abs() < 1e-15);
        let c = MemristorCell::new(0.0, 0.1, 0.5).unwrap();
        assert!((c.conductance() - 1e-6).abs() < 1e-15);
    }
}
