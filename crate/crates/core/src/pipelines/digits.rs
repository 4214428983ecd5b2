//! Binary digit classification (0 vs 1) with an 8-input crossbar layer.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    open_backend, unix_now, write_json, ExperimentConfig, MinMax, Partial, Pca, ProgrammingSummary, CROSSBAR,
};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::programming::{program_array, TargetGrid};
use crate::training::{
    chip_dataset_loss, finetune_bias_chip_in_loop, softmax, train_constrained_linear, KktReport,
    LabeledDataset, LinearModel, PgdConfig,
};

const EMBEDDED: &str = include_str!("../../data/digits.csv");
pub const PIXELS: usize = 64;
const CLASSES: usize = 2;

/// Raw 8×8 images (intensities 0–16) with their digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitImages {
    pub pixels: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Reads `p0..p63,label` CSV.
pub fn load_digits_csv<R: Read>(reader: R) -> Result<DigitImages> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<String> = (0..PIXELS).map(|i| format!("p{i}")).chain(["label".into()]).collect();
    if headers.len() != expected.len() {
        return Err(Error::Ingestion {
            row: 0,
            column: "header".into(),
            detail: format!("expected {} columns, found {}", expected.len(), headers.len()),
        });
    }
    for (h, e) in headers.iter().zip(&expected) {
        if h != e {
            return Err(Error::Ingestion {
                row: 0,
                column: h.into(),
                detail: format!("expected column {e}"),
            });
        }
    }
    let mut out = DigitImages {
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let mut px = Vec::with_capacity(PIXELS);
        for (j, field) in rec.iter().take(PIXELS).enumerate() {
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Ingestion {
                row,
                column: expected[j].clone(),
                detail: format!("not a finite number: {field:?}"),
            })?;
            px.push(v);
        }
        let label_field = rec.get(PIXELS).unwrap_or("");
        let label = label_field.parse().map_err(|_| Error::Ingestion {
            row,
            column: "label".into(),
            detail: format!("not a non-negative integer: {label_field:?}"),
        })?;
        out.pixels.push(px);
        out.labels.push(label);
    }
    Ok(out)
}

/// The bundled corpus (1797 images, digits 0–9).
pub fn embedded_digits() -> DigitImages {
    load_digits_csv(EMBEDDED.as_bytes()).expect("bundled digits CSV is well formed")
}

impl DigitImages {
    /// Keeps only digits 0 and 1.
    pub fn binary(&self) -> Self {
        let keep: Vec<usize> = (0..self.labels.len()).filter(|&i| self.labels[i] < CLASSES).collect();
        Self {
            pixels: keep.iter().map(|&i| self.pixels[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Train/test sets after projection and rescaling; both transforms are fitted
/// on the training rows only.
#[derive(Debug, Clone)]
pub struct PreparedDigits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub pca: Pca,
    pub scaler: MinMax,
}

pub fn prepare_digits(images: &DigitImages, k: usize, split: f64, seed: u64) -> Result<PreparedDigits> {
    let (train_indices, test_indices) = super::train_test_split(images.labels.len(), split, seed)?;
    let pick = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| images.pixels[i].clone()).collect() };
    let labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| images.labels[i]).collect() };
    let pca = Pca::fit(&pick(&train_indices), k)?;
    let train_scores = pca.project_all(&pick(&train_indices));
    let scaler = MinMax::fit(&train_scores)?;
    let train = LabeledDataset::classification(scaler.transform(&train_scores), &labels(&train_indices), CLASSES)?;
    let test_scores = pca.project_all(&pick(&test_indices));
    let test = LabeledDataset::classification(scaler.transform(&test_scores), &labels(&test_indices), CLASSES)?;
    Ok(PreparedDigits {
        train,
        test,
        train_indices,
        test_indices,
        pca,
        scaler,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl ThresholdSweep {
    /// Highest accuracy and the first threshold reaching it.
    pub fn best(&self) -> (f64, f64) {
        let mut best = (self.accuracy[0], self.thresholds[0]);
        for (&a, &t) in self.accuracy.iter().zip(&self.thresholds) {
            if a > best.0 {
                best = (a, t);
            }
        }
        best
    }
}

/// Accuracy of "class 1 iff p₁ > t" for t = 0, 0.01, …, 1.
pub fn threshold_sweep(p1: &[f64], labels: &[usize]) -> ThresholdSweep {
    let thresholds: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let n = labels.len().max(1) as f64;
    let accuracy = thresholds
        .iter()
        .map(|&t| {
            p1.iter()
                .zip(labels)
                .filter(|(&p, &l)| usize::from(p > t) == l)
                .count() as f64
                / n
        })
        .collect();
    ThresholdSweep { thresholds, accuracy }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitsReport {
    pub generated_at_unix: u64,
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub pca_eigenvalues: Vec<f64>,
    pub scaler: MinMax,
    pub software_model: LinearModel,
    pub kkt: KktReport,
    pub training_iterations: usize,
    /// Argmax accuracy of the software model on the test split.
    pub software_accuracy: f64,
    pub software_sweep: ThresholdSweep,
    pub software_best_accuracy: f64,
    pub programming: ProgrammingSummary,
    pub init_bias: Vec<f64>,
    pub bias: Vec<f64>,
    /// Chip training loss with the initial and the fine-tuned bias.
    pub loss_before_finetune: f64,
    pub loss_after_finetune: f64,
    pub sweep: ThresholdSweep,
    pub best_accuracy: f64,
    pub best_threshold: f64,
}

impl DigitsReport {
    pub fn e_tot(&self) -> f64 {
        self.programming.e_tot
    }

    pub fn convergence_fraction(&self) -> f64 {
        self.programming.convergence_fraction
    }

    /// Writes `digits_report.json` and `digits_sweep.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("digits_report.json"), self)?;
        let mut w = csv::Writer::from_path(dir.join("digits_sweep.csv"))?;
        w.write_record(["threshold", "chip_accuracy", "software_accuracy"])?;
        for i in 0..self.sweep.thresholds.len() {
            w.write_record([
                format!("{:.2}", self.sweep.thresholds[i]),
                self.sweep.accuracy[i].to_string(),
                self.software_sweep.accuracy[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn chip_p1<B: Backend + ?Sized>(h: &mut B, data: &LabeledDataset, bias: &[f64]) -> Result<Vec<f64>> {
    let rows = h.dims().0;
    data.inputs()
        .iter()
        .map(|x| {
            let mut v = vec![0.0; rows];
            v[..x.len()].copy_from_slice(x);
            let out = h.infer(&v)?;
            let a: Vec<f64> = out[..CLASSES].iter().zip(bias).map(|(o, b)| o + b).collect();
            Ok(softmax(&a)[1])
        })
        .collect()
}

/// Crossbar targets: feature `i` drives row `i`, class `c` reads column `c`.
pub fn linear_targets(model: &LinearModel) -> TargetGrid {
    let mut grid = TargetGrid::empty(CROSSBAR.0, CROSSBAR.1);
    for (c, row) in model.phi.iter().enumerate() {
        for (i, &w) in row.iter().enumerate() {
            grid.set(i, c, w);
        }
    }
    grid
}

/// Loads the configured dataset, or the bundled corpus when none is set.
pub fn load_configured(cfg: &ExperimentConfig) -> Result<DigitImages> {
    match &cfg.dataset {
        Some(p) => load_digits_csv(std::fs::File::open(p)?),
        None => Ok(embedded_digits()),
    }
}

pub fn run_digits_experiment(cfg: &ExperimentConfig) -> Result<DigitsReport> {
    cfg.validate()?;
    let images = load_configured(cfg)?;
    let mut h = open_backend(cfg)?;
    run_digits_on(cfg, &images, h.as_mut())
}

/// Runs the pipeline against an already opened backend.
pub fn run_digits_on<B: Backend + ?Sized>(
    cfg: &ExperimentConfig,
    images: &DigitImages,
    h: &mut B,
) -> Result<DigitsReport> {
    let mut partial = Partial::default();
    let prep = prepare_digits(&images.binary(), cfg.pca_components, cfg.split, cfg.seed)?;
    if prep.train.input_dim() > h.dims().0 {
        return Err(Error::Config(format!(
            "{} components do not fit {} crossbar rows",
            prep.train.input_dim(),
            h.dims().0
        )));
    }
    partial.record("n_train", &prep.train.len());
    partial.record("n_test", &prep.test.len());

    let pgd = PgdConfig {
        exec: cfg.exec,
        ..Default::default()
    };
    let fit = partial.guard(
        "train",
        train_constrained_linear(&prep.train, (CLASSES, prep.train.input_dim()), &pgd),
    )?;
    let software_p1: Vec<f64> = prep
        .test
        .inputs()
        .iter()
        .map(|x| fit.model.predict_proba(x)[1])
        .collect();
    let software_sweep = threshold_sweep(&software_p1, &prep.test.labels());
    let software_accuracy = fit.model.accuracy(&prep.test);
    partial.record("software_model", &fit.model);
    partial.record("software_accuracy", &software_accuracy);

    let programmed = partial.guard("program", program_array(h, &linear_targets(&fit.model), &cfg.vipi, cfg.method))?;
    let programming = ProgrammingSummary::from(&programmed);
    partial.record("programming", &programming);

    let tuned = partial.guard(
        "finetune",
        finetune_bias_chip_in_loop(h, &prep.train, cfg.finetune_eta, cfg.finetune_steps, cfg.seed.wrapping_add(1)),
    )?;
    let loss_before_finetune = partial.guard("finetune", chip_dataset_loss(h, &prep.train, &tuned.init_bias))?;
    let loss_after_finetune = partial.guard("finetune", chip_dataset_loss(h, &prep.train, &tuned.bias))?;
    partial.record("bias", &tuned.bias);

    let p1 = partial.guard("evaluate", chip_p1(h, &prep.test, &tuned.bias))?;
    let sweep = threshold_sweep(&p1, &prep.test.labels());
    let (best_accuracy, best_threshold) = sweep.best();

    Ok(DigitsReport {
        generated_at_unix: unix_now(),
        config: cfg.clone(),
        n_train: prep.train.len(),
        n_test: prep.test.len(),
        pca_eigenvalues: prep.pca.eigenvalues[..prep.pca.k()].to_vec(),
        scaler: prep.scaler,
        software_best_accuracy: software_sweep.best().0,
        software_model: fit.model,
        kkt: fit.kkt,
        training_iterations: fit.iterations,
        software_accuracy,
        software_sweep,
        programming,
        init_bias: tuned.init_bias,
        bias: tuned.bias,
        loss_before_finetune,
        loss_after_finetune,
        sweep,
        best_accuracy,
        best_threshold,
    })
}
