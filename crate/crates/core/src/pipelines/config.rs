//! Experiment configuration and its flat `key = value` file format.
//!
//! Keys mirror the command-line flags (`seed`, `method`, `backend`, `split`,
//! `dataset`, `out`) plus dotted tuning keys such as `vipi.k_p`,
//! `variability.v_th_sd`, `finetune.eta` or `mlp.epochs`. Blank lines and
//! lines starting with `#` are ignored.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::backend::BackendSpec;
use crate::device::VariabilitySpec;
use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::programming::{Method, VipiConfig};
use crate::training::MlpTrainConfig;

pub const SEED_ENV: &str = "MENA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variability: VariabilitySpec,
    pub vipi: VipiConfig,
    pub method: Method,
    /// Train fraction.
    pub split: f64,
    #[serde(serialize_with = "as_display")]
    pub backend: BackendSpec,
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    /// Bias fine-tuning (digits).
    pub finetune_eta: f64,
    pub finetune_steps: usize,
    /// Layer-2 fine-tuning (robot).
    pub robot_eta: f64,
    pub robot_steps: usize,
    pub robot_samples: usize,
    pub mlp: MlpTrainConfig,
    pub pca_components: usize,
    pub exec: Exec,
}

fn as_display<S: serde::Serializer>(v: &BackendSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            variability: VariabilitySpec::default(),
            vipi: VipiConfig::default(),
            method: Method::Vipi,
            split: 0.7,
            backend: BackendSpec::Direct,
            dataset: None,
            out: PathBuf::from("out"),
            finetune_eta: 0.05,
            finetune_steps: 2000,
            robot_eta: 0.01,
            robot_steps: 3000,
            robot_samples: 1200,
            mlp: MlpTrainConfig::default(),
            pca_components: 8,
            exec: Exec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl ExperimentConfig {
    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "method" => self.method = v.parse()?,
            "backend" => self.backend = v.parse()?,
            "split" => self.split = parse(key, v)?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "exec" => {
                self.exec = match v {
                    "parallel" => Exec::Parallel,
                    "sequential" => Exec::Sequential,
                    _ => return Err(Error::Config(format!("invalid value {v:?} for exec"))),
                }
            }
            "pca.components" => self.pca_components = parse(key, v)?,
            "finetune.eta" => self.finetune_eta = parse(key, v)?,
            "finetune.steps" => self.finetune_steps = parse(key, v)?,
            "robot.eta" => self.robot_eta = parse(key, v)?,
            "robot.steps" => self.robot_steps = parse(key, v)?,
            "robot.samples" => self.robot_samples = parse(key, v)?,
            "mlp.hidden" => self.mlp.hidden = parse(key, v)?,
            "mlp.epochs" => self.mlp.epochs = parse(key, v)?,
            "mlp.lr" => self.mlp.lr = parse(key, v)?,
            "mlp.batch_size" => self.mlp.batch_size = parse(key, v)?,
            "vipi.k_p" => self.vipi.k_p = parse(key, v)?,
            "vipi.k_i" => self.vipi.k_i = parse(key, v)?,
            "vipi.epsilon" => self.vipi.epsilon = parse(key, v)?,
            "vipi.delta" => self.vipi.delta = parse(key, v)?,
            "vipi.n_c" => self.vipi.n_c = parse(key, v)?,
            "vipi.n_iter" => self.vipi.n_iter = parse(key, v)?,
            "vipi.e_max" => self.vipi.e_max = parse(key, v)?,
            "vipi.v_delta_init" => self.vipi.v_delta_init = parse(key, v)?,
            "vipi.n_avg" => self.vipi.n_avg = parse(key, v)?,
            "vipi.v_delta_max" => self.vipi.v_delta_max = parse(key, v)?,
            "variability.v_th_mean" => self.variability.v_th_mean = parse(key, v)?,
            "variability.v_th_sd" => self.variability.v_th_sd = parse(key, v)?,
            "variability.v_th_min" => self.variability.v_th_clip.0 = parse(key, v)?,
            "variability.v_th_max" => self.variability.v_th_clip.1 = parse(key, v)?,
            "variability.k_mean" => self.variability.k_mean = parse(key, v)?,
            "variability.k_sd" => self.variability.k_sd = parse(key, v)?,
            "variability.read_noise_sd" => self.variability.read_noise_sd = parse(key, v)?,
            "variability.adc_bits" => {
                self.variability.adc_bits = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Seed from the environment, if set and numeric.
    pub fn env_seed() -> Result<Option<u64>> {
        match std::env::var(SEED_ENV) {
            Ok(s) => parse(SEED_ENV, &s).map(Some),
            Err(_) => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split {} must lie in (0, 1)", self.split)));
        }
        if !(self.finetune_eta >= 0.0 && self.robot_eta >= 0.0) {
            return Err(Error::Config("fine-tuning rates must be non-negative".into()));
        }
        if self.robot_samples < 100 {
            return Err(Error::Config("robot.samples must be at least 100".into()));
        }
        self.vipi.validate()?;
        self.variability.validate()
    }
}
