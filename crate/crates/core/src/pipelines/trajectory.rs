//! Synthetic wheeled-robot logs: a kinematic unicycle driving a closed loop
//! around rectangular obstacles.
//!
//! The commands are a pure function of the logged pose (for a given seeded
//! environment), so the regression target is well defined.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ColumnMinMax;
use crate::error::{Error, Result};
use crate::training::LabeledDataset;

pub const COLUMNS: [&str; 6] = ["t", "x", "y", "theta", "v_cmd", "steer_cmd"];
pub const DT: f64 = 0.1;
const WHEELBASE: f64 = 0.5;
const CENTER: (f64, f64) = (5.0, 5.0);
const WAYPOINTS: usize = 8;
const LOOKAHEAD: f64 = 0.6;
const STEER_MAX: f64 = 0.6;
const V_MAX: f64 = 0.8;
const INFLUENCE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_cmd: f64,
    pub steer_cmd: f64,
}

impl TrajectoryRow {
    pub fn pose(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn commands(&self) -> [f64; 2] {
        [self.v_cmd, self.steer_cmd]
    }
}

/// Axis-aligned box `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Obstacle {
    fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.min.0, self.max.0), y.clamp(self.min.1, self.max.1))
    }
}

/// Loop shape and obstacle layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Loop radius at `WAYPOINTS` evenly spaced bearings around the center.
    pub radii: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
}

fn wrap(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl Environment {
    pub fn seeded(rng: &mut impl Rng) -> Self {
        let radii: Vec<f64> = (0..WAYPOINTS).map(|_| 3.5 + rng.random_range(-0.5..0.5)).collect();
        let mut env = Self {
            radii,
            obstacles: Vec::new(),
        };
        for k in 0..3 {
            let bearing = TAU * (k as f64 + rng.random_range(0.2..0.8)) / 3.0;
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let r = env.radius(bearing) + side * rng.random_range(0.9..1.3);
            let (cx, cy) = (CENTER.0 + r * bearing.cos(), CENTER.1 + r * bearing.sin());
            let (hw, hh) = (rng.random_range(0.2..0.4), rng.random_range(0.2..0.4));
            env.obstacles.push(Obstacle {
                min: (cx - hw, cy - hh),
                max: (cx + hw, cy + hh),
            });
        }
        env
    }

    /// Loop radius at `bearing`, linearly interpolated between waypoints.
    pub fn radius(&self, bearing: f64) -> f64 {
        let s = bearing.rem_euclid(TAU) / TAU * WAYPOINTS as f64;
        let i = (s.floor() as usize) % WAYPOINTS;
        let f = s - s.floor();
        self.radii[i] * (1.0 - f) + self.radii[(i + 1) % WAYPOINTS] * f
    }

    /// Commanded `(v, steer)` at a pose: pure pursuit towards a lookahead point
    /// on the loop plus a repulsive steering term near obstacles.
    pub fn command(&self, x: f64, y: f64, theta: f64) -> (f64, f64) {
        let bearing = (y - CENTER.1).atan2(x - CENTER.0) + LOOKAHEAD;
        let r = self.radius(bearing);
        let (gx, gy) = (CENTER.0 + r * bearing.cos(), CENTER.1 + r * bearing.sin());
        let heading_err = wrap((gy - y).atan2(gx - x) - theta);

        let mut repulse = 0.0;
        let mut clearance = INFLUENCE;
        for o in &self.obstacles {
            let (nx, ny) = o.nearest(x, y);
            let d = (x - nx).hypot(y - ny);
            clearance = clearance.min(d);
            if d < INFLUENCE {
                let away = (y - ny).atan2(x - nx);
                repulse += 0.8 * (1.0 - d / INFLUENCE).powi(2) * (away - theta).sin();
            }
        }
        let steer = (1.2 * heading_err + repulse).clamp(-STEER_MAX, STEER_MAX);
        let v = V_MAX * (0.5 + 0.5 * heading_err.cos()) * (0.4 + 0.6 * clearance / INFLUENCE);
        (v, steer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    /// Simulates `n` steps. Process noise perturbs the pose after each step.
    pub fn simulate(env: &Environment, n: usize, rng: &mut impl Rng) -> Self {
        let pos_noise = Normal::new(0.0, 0.01).expect("positive sd");
        let start = rng.random_range(0.0..TAU);
        let r = env.radius(start);
        let mut x = CENTER.0 + r * start.cos();
        let mut y = CENTER.1 + r * start.sin();
        let mut theta = wrap(start + PI / 2.0 + Normal::new(0.0, 0.2).expect("positive sd").sample(rng));
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let (v, steer) = env.command(x, y, theta);
            rows.push(TrajectoryRow {
                t: i as f64 * DT,
                x,
                y,
                theta,
                v_cmd: v,
                steer_cmd: steer,
            });
            x += v * theta.cos() * DT + pos_noise.sample(rng);
            y += v * theta.sin() * DT + pos_noise.sample(rng);
            theta = wrap(theta + v / WHEELBASE * steer.tan() * DT + pos_noise.sample(rng));
        }
        Self { rows }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.write_record([r.t, r.x, r.y, r.theta, r.v_cmd, r.steer_cmd].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(COLUMNS) {
            return Err(Error::Ingestion {
                row: 0,
                column: "header".into(),
                detail: format!("expected {}", COLUMNS.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut v = [0.0; 6];
            for (j, name) in COLUMNS.iter().enumerate() {
                let field = rec.get(j).unwrap_or("");
                v[j] = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Ingestion {
                    row: i + 1,
                    column: (*name).into(),
                    detail: format!("not a finite number: {field:?}"),
                })?;
            }
            rows.push(TrajectoryRow {
                t: v[0],
                x: v[1],
                y: v[2],
                theta: v[3],
                v_cmd: v[4],
                steer_cmd: v[5],
            });
        }
        Ok(Self { rows })
    }

    pub fn poses(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.pose().to_vec()).collect()
    }

    pub fn commands(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.commands().to_vec()).collect()
    }

    /// Regression set of `[x, y, theta] → [v, steer]` rescaled with `scaler`.
    pub fn to_dataset(&self, scaler: &ColumnMinMax) -> Result<LabeledDataset> {
        LabeledDataset::regression(scaler.transform(&self.poses()), self.commands())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

/// Seeded environment and `n`-step trajectory, with inputs rescaled per column
/// over the whole trajectory.
pub fn generate_trajectory_dataset(seed: u64, n: usize) -> Result<(LabeledDataset, Trajectory)> {
    if n < 100 {
        return Err(Error::Config(format!("need at least 100 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = Environment::seeded(&mut rng);
    let traj = Trajectory::simulate(&env, n, &mut rng);
    let scaler = ColumnMinMax::fit(&traj.poses())?;
    Ok((traj.to_dataset(&scaler)?, traj))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_bytes() {
        let bytes = |seed| {
            let mut buf = Vec::new();
            generate_trajectory_dataset(seed, 300).unwrap().1.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(4), bytes(4));
        assert_ne!(bytes(4), bytes(5));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (_, traj) = generate_trajectory_dataset(1, 200).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), traj);
    }

    #[test]
    fn inputs_are_normalized_and_commands_bounded() {
        let (data, traj) = generate_trajectory_dataset(2, 1000).unwrap();
        assert!(data.inputs().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert!(traj.rows.iter().all(|r| r.steer_cmd.abs() <= STEER_MAX && r.v_cmd > 0.0));
    }

    #[test]
    fn robot_stays_near_the_loop() {
        let (_, traj) = generate_trajectory_dataset(3, 1500).unwrap();
        for r in &traj.rows {
            let d = (r.x - CENTER.0).hypot(r.y - CENTER.1);
            assert!((1.5..6.0).contains(&d), "{r:?}");
        }
    }

    #[test]
    fn commands_depend_only_on_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let env = Environment::seeded(&mut rng);
        let traj = Trajectory::simulate(&env, 400, &mut rng);
        let mut doubled = traj.rows.clone();
        doubled.extend(traj.rows.iter().map(|r| {
            let (v, s) = env.command(r.x, r.y, r.theta);
            TrajectoryRow { t: r.t + 1e3, v_cmd: v, steer_cmd: s, ..*r }
        }));
        for a in &doubled {
            for b in doubled.iter().filter(|b| b.pose() == a.pose()) {
                assert_eq!(a.commands(), b.commands());
            }
        }
    }

    #[test]
    fn schema_violations_name_row_and_column() {
        let text = "t,x,y,theta,v_cmd,steer_cmd\n0,1,2,3,4,5\n0.1,1,oops,3,4,5\n";
        match Trajectory::read_csv(text.as_bytes()) {
            Err(Error::Ingestion { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "y")),
            other => panic!("{other:?}"),
        }
        assert!(Trajectory::read_csv("t,x,y\n".as_bytes()).is_err());
    }

    #[test]
    fn too_few_samples() {
        assert!(generate_trajectory_dataset(0, 99).is_err());
    }
}
