//! Two-layer ReLU regressor whose first layer is kept programmable (`[0, 1]`).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_fits_crossbar, pad_input, LabeledDataset, Task};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::programming::TargetGrid;

/// `y = layer2 · relu(layer1 · x + bias1) + bias2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// hidden × inputs, entries in `[0, 1]`; this layer lives on the crossbar.
    pub layer1: Vec<Vec<f64>>,
    pub bias1: Vec<f64>,
    /// outputs × hidden, unconstrained.
    pub layer2: Vec<Vec<f64>>,
    pub bias2: Vec<f64>,
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

impl MlpModel {
    pub fn hidden(&self) -> usize {
        self.layer1.len()
    }

    pub fn inputs(&self) -> usize {
        self.layer1.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.layer2.len()
    }

    /// First-layer product `layer1 · x` (what the crossbar computes).
    pub fn first_layer(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.layer1, x)
    }

    /// Output given the first-layer product `o` (bias1 not yet applied).
    pub fn head(&self, o: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = o.iter().zip(&self.bias1).map(|(o, b)| (o + b).max(0.0)).collect();
        matvec(&self.layer2, &h)
            .into_iter()
            .zip(&self.bias2)
            .map(|(y, b)| y + b)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.head(&self.first_layer(x))
    }

    /// Crossbar targets: input `i` drives row `i`, hidden unit `j` reads column `j`.
    pub fn crossbar_targets(&self, rows: usize, cols: usize) -> TargetGrid {
        let mut grid = TargetGrid::empty(rows, cols);
        for (j, row) in self.layer1.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                grid.set(i, j, w);
            }
        }
        grid
    }
}

/// Squared error `Σ_k (y_k − t_k)²` of one sample given the first-layer product `o`.
pub fn sample_loss(model: &MlpModel, o: &[f64], target: &[f64]) -> f64 {
    model.head(o).iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum()
}

/// Gradients of [`sample_loss`] with respect to `layer2` and `bias2`.
pub fn layer2_gradients(model: &MlpModel, o: &[f64], target: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let h: Vec<f64> = o.iter().zip(&model.bias1).map(|(o, b)| (o + b).max(0.0)).collect();
    let grad_b2: Vec<f64> = model
        .head(o)
        .iter()
        .zip(target)
        .map(|(y, t)| 2.0 * (y - t))
        .collect();
    let grad_w2 = grad_b2.iter().map(|g| h.iter().map(|hj| g * hj).collect()).collect();
    (grad_w2, grad_b2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            epochs: 400,
            lr: 0.02,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Mean per-sample squared error after each epoch.
    pub loss_trace: Vec<f64>,
}

fn init_model(data: &LabeledDataset, hidden: usize, rng: &mut ChaCha8Rng) -> MlpModel {
    let (d, m) = (data.input_dim(), data.output_dim());
    let layer1: Vec<Vec<f64>> = (0..hidden)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    // Place each unit's kink inside the input range.
    let bias1 = layer1
        .iter()
        .map(|row| -rng.random_range(0.1..0.7) * row.iter().sum::<f64>())
        .collect();
    let scale = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("positive sd");
    let layer2 = (0..m)
        .map(|_| (0..hidden).map(|_| scale.sample(rng)).collect())
        .collect();
    let n = data.len() as f64;
    let bias2 = (0..m)
        .map(|k| data.targets().iter().map(|t| t[k]).sum::<f64>() / n)
        .collect();
    MlpModel {
        layer1,
        bias1,
        layer2,
        bias2,
    }
}

/// Mean per-sample squared error of the software model.
pub(crate) fn mean_loss(model: &MlpModel, data: &LabeledDataset) -> f64 {
    data.inputs()
        .iter()
        .zip(data.targets())
        .map(|(x, t)| sample_loss(model, &model.first_layer(x), t))
        .sum::<f64>()
        / data.len().max(1) as f64
}

/// Mini-batch SGD on both layers, projecting `layer1` back onto `[0, 1]` after every step.
pub fn train_mlp_software(data: &LabeledDataset, cfg: &MlpTrainConfig) -> Result<MlpFit> {
    if data.task() != Task::Regression || data.is_empty() {
        return Err(Error::Config("MLP training needs a non-empty regression set".into()));
    }
    if data.input_dim() > cfg.hidden.max(8) || cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(format!(
            "unsupported MLP shape: {} inputs, {} hidden, batch {}",
            data.input_dim(),
            cfg.hidden,
            cfg.batch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(data, cfg.hidden, &mut rng);
    let (d, hd, m) = (data.input_dim(), cfg.hidden, data.output_dim());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut g_w1 = vec![vec![0.0; d]; hd];
            let mut g_b1 = vec![0.0; hd];
            let mut g_w2 = vec![vec![0.0; hd]; m];
            let mut g_b2 = vec![0.0; m];
            for &i in batch {
                let x = &data.inputs()[i];
                let t = &data.targets()[i];
                let z1: Vec<f64> = model
                    .first_layer(x)
                    .iter()
                    .zip(&model.bias1)
                    .map(|(a, b)| a + b)
                    .collect();
                let h: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
                let y = model.head(&model.first_layer(x));
                let dy: Vec<f64> = y.iter().zip(t).map(|(y, t)| 2.0 * (y - t)).collect();
                for k in 0..m {
                    g_b2[k] += dy[k];
                    for j in 0..hd {
                        g_w2[k][j] += dy[k] * h[j];
                    }
                }
                for j in 0..hd {
                    if z1[j] <= 0.0 {
                        continue;
                    }
                    let dz: f64 = (0..m).map(|k| model.layer2[k][j] * dy[k]).sum();
                    g_b1[j] += dz;
                    for (g, xi) in g_w1[j].iter_mut().zip(x) {
                        *g += dz * xi;
                    }
                }
            }
            let scale = cfg.lr / batch.len() as f64;
            for j in 0..hd {
                for (w, g) in model.layer1[j].iter_mut().zip(&g_w1[j]) {
                    *w = (*w - scale * g).clamp(0.0, 1.0);
                }
                model.bias1[j] -= scale * g_b1[j];
            }
            for k in 0..m {
                for (w, g) in model.layer2[k].iter_mut().zip(&g_w2[k]) {
                    *w -= scale * g;
                }
                model.bias2[k] -= scale * g_b2[k];
            }
        }
        let loss = mean_loss(&model, data);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("MLP loss became {loss} in epoch {epoch}")));
        }
        loss_trace.push(loss);
    }
    Ok(MlpFit { model, loss_trace })
}

/// Chip-in-the-loop SGD on `layer2` and `bias2`; the crossbar supplies the
/// first-layer product and is never differentiated through.
pub fn finetune_layer2_chip_in_loop<B: Backend + ?Sized>(
    h: &mut B,
    model: &MlpModel,
    data: &LabeledDataset,
    eta: f64,
    n_step: usize,
    seed: u64,
) -> Result<MlpModel> {
    if data.task() != Task::Regression || data.is_empty() {
        return Err(Error::Config("layer-2 fine-tuning needs a non-empty regression set".into()));
    }
    let (rows, cols) = h.dims();
    check_fits_crossbar(data, rows, model.hidden(), cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuned = model.clone();
    for _ in 0..n_step {
        let i = rng.random_range(0..data.len());
        let out = h.infer(&pad_input(&data.inputs()[i], rows))?;
        let (g_w2, g_b2) = layer2_gradients(&tuned, &out[..tuned.hidden()], &data.targets()[i]);
        for (row, grow) in tuned.layer2.iter_mut().zip(&g_w2) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= eta * g;
            }
        }
        for (b, g) in tuned.bias2.iter_mut().zip(&g_b2) {
            *b -= eta * g;
        }
    }
    Ok(tuned)
}
