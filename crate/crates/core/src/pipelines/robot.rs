//! Pose-to-command regression with the hidden layer on the crossbar.

use std::path::Path;

use serde::Serialize;

use super::{
    open_backend, rmse, train_test_split, unix_now, write_json, ColumnMinMax, ExperimentConfig, Partial,
    ProgrammingSummary, Trajectory,
};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::programming::program_array;
use crate::training::{finetune_layer2_chip_in_loop, train_mlp_software, LabeledDataset, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rmse {
    pub v: f64,
    pub steer: f64,
    pub overall: f64,
}

impl Rmse {
    fn of(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Self {
        let (per, overall) = rmse(pred, truth);
        Self {
            v: per[0],
            steer: per[1],
            overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotReport {
    pub generated_at_unix: u64,
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub scaler: ColumnMinMax,
    pub software_model: MlpModel,
    pub training_loss: Vec<f64>,
    pub programming: ProgrammingSummary,
    pub tuned_model: MlpModel,
    pub rmse_software: Rmse,
    /// Chip hidden layer with the software output layer.
    pub rmse_chip: Rmse,
    /// Chip hidden layer with the chip-in-the-loop output layer.
    pub rmse_chip_finetuned: Rmse,
    #[serde(skip)]
    pub held_out: Trajectory,
    #[serde(skip)]
    pub predictions: Vec<Vec<f64>>,
    #[serde(skip)]
    pub software_predictions: Vec<Vec<f64>>,
}

fn write_predictions(path: &Path, truth: &Trajectory, pred: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "v_true", "v_pred", "steer_true", "steer_pred"])?;
    for (r, p) in truth.rows.iter().zip(pred) {
        w.write_record([r.t, r.v_cmd, p[0], r.steer_cmd, p[1]].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

impl RobotReport {
    /// Writes `robot_report.json`, `robot_predictions.csv` (fine-tuned chip) and
    /// `robot_predictions_software.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("robot_report.json"), self)?;
        write_predictions(&dir.join("robot_predictions.csv"), &self.held_out, &self.predictions)?;
        write_predictions(
            &dir.join("robot_predictions_software.csv"),
            &self.held_out,
            &self.software_predictions,
        )
    }
}

fn chip_predict<B: Backend + ?Sized>(h: &mut B, model: &MlpModel, data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let rows = h.dims().0;
    data.inputs()
        .iter()
        .map(|x| {
            let mut v = vec![0.0; rows];
            v[..x.len()].copy_from_slice(x);
            let out = h.infer(&v)?;
            Ok(model.head(&out[..model.hidden()]))
        })
        .collect()
}

pub fn load_configured(cfg: &ExperimentConfig) -> Result<Trajectory> {
    match &cfg.dataset {
        Some(p) => Trajectory::read_csv(std::fs::File::open(p)?),
        None => Ok(super::generate_trajectory_dataset(cfg.seed, cfg.robot_samples)?.1),
    }
}

pub fn run_robot_experiment(cfg: &ExperimentConfig) -> Result<RobotReport> {
    cfg.validate()?;
    let traj = load_configured(cfg)?;
    let mut h = open_backend(cfg)?;
    run_robot_on(cfg, &traj, h.as_mut())
}

pub fn run_robot_on<B: Backend + ?Sized>(cfg: &ExperimentConfig, traj: &Trajectory, h: &mut B) -> Result<RobotReport> {
    let mut partial = Partial::default();
    let (train_idx, test_idx) = train_test_split(traj.rows.len(), cfg.split, cfg.seed)?;
    let (train_traj, test_traj) = (traj.subset(&train_idx), traj.subset(&test_idx));
    let scaler = ColumnMinMax::fit(&train_traj.poses())?;
    let train = train_traj.to_dataset(&scaler)?;
    let test = test_traj.to_dataset(&scaler)?;
    let (rows, cols) = h.dims();
    if train.input_dim() > rows || cfg.mlp.hidden > cols {
        return Err(Error::Config(format!(
            "a {}-{}-2 network does not fit a {rows}x{cols} crossbar",
            train.input_dim(),
            cfg.mlp.hidden
        )));
    }
    partial.record("n_train", &train.len());
    partial.record("n_test", &test.len());

    let mlp_cfg = crate::training::MlpTrainConfig { seed: cfg.seed, ..cfg.mlp };
    let fit = partial.guard("train", train_mlp_software(&train, &mlp_cfg))?;
    let software_predictions: Vec<Vec<f64>> = test.inputs().iter().map(|x| fit.model.predict(x)).collect();
    let rmse_software = Rmse::of(&software_predictions, test.targets());
    partial.record("software_model", &fit.model);
    partial.record("rmse_software", &rmse_software);

    let targets = fit.model.crossbar_targets(rows, cols);
    let programmed = partial.guard("program", program_array(h, &targets, &cfg.vipi, cfg.method))?;
    let programming = ProgrammingSummary::from(&programmed);
    partial.record("programming", &programming);

    let chip = partial.guard("evaluate", chip_predict(h, &fit.model, &test))?;
    let rmse_chip = Rmse::of(&chip, test.targets());
    partial.record("rmse_chip", &rmse_chip);

    let tuned = partial.guard(
        "finetune",
        finetune_layer2_chip_in_loop(h, &fit.model, &train, cfg.robot_eta, cfg.robot_steps, cfg.seed.wrapping_add(1)),
    )?;
    let predictions = partial.guard("evaluate", chip_predict(h, &tuned, &test))?;
    let rmse_chip_finetuned = Rmse::of(&predictions, test.targets());

    Ok(RobotReport {
        generated_at_unix: unix_now(),
        config: cfg.clone(),
        n_train: train.len(),
        n_test: test.len(),
        scaler,
        software_model: fit.model,
        training_loss: fit.loss_trace,
        programming,
        tuned_model: tuned,
        rmse_software,
        rmse_chip,
        rmse_chip_finetuned,
        held_out: test_traj,
        predictions,
        software_predictions,
    })
}
