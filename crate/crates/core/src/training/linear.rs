//! Softmax regression with the weight matrix confined to `[0, 1]`.
//!
//! The loss is the summed cross-entropy over the dataset. It is minimized by
//! projected gradient descent with Barzilai-Borwein step proposals and an
//! Armijo backtracking test along the projection arc. The bias is
//! unconstrained. A first-order KKT certificate is returned with the model.

use serde::{Deserialize, Serialize};

use super::{cross_entropy, softmax, LabeledDataset, Task};
use crate::error::{Error, Result};
use crate::parallel::{self, Exec};

/// Scaled KKT residual accepted as optimal: violations ≤ `1e-4 · (1 + |L|)`.
pub const KKT_TOLERANCE: f64 = 1e-4;

/// `softmax(phi · x + bias)` with `phi` of shape classes × inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub phi: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn classes(&self) -> usize {
        self.phi.len()
    }

    pub fn inputs(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.phi
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Summed cross-entropy over `data`.
    pub fn loss(&self, data: &LabeledDataset) -> f64 {
        data.inputs()
            .iter()
            .zip(data.targets())
            .map(|(x, y)| cross_entropy(&self.predict_proba(x), y))
            .sum()
    }

    /// Fraction of rows whose arg-max class matches the label (ties go to the lower index).
    pub fn accuracy(&self, data: &LabeledDataset) -> f64 {
        let hits = data
            .inputs()
            .iter()
            .zip(data.labels())
            .filter(|(x, label)| argmax(&self.logits(x)) == *label)
            .count();
        hits as f64 / data.len().max(1) as f64
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and gradient at `model`. The gradient is laid out as `[phi row-major | bias]`.
pub fn loss_and_gradient(model: &LinearModel, data: &LabeledDataset, exec: Exec) -> (f64, Vec<f64>) {
    let (c, d) = (model.classes(), model.inputs());
    let n_phi = c * d;
    // Slot `n_phi + c` accumulates the loss.
    let acc = parallel::sum_vectors(exec, data.len(), n_phi + c + 1, |i, acc| {
        let x = &data.inputs()[i];
        let y = &data.targets()[i];
        let p = model.predict_proba(x);
        for k in 0..c {
            let r = p[k] - y[k];
            for j in 0..d {
                acc[k * d + j] += r * x[j];
            }
            acc[n_phi + k] += r;
        }
        acc[n_phi + c] += cross_entropy(&p, y);
    });
    let loss = acc[n_phi + c];
    let mut grad = acc;
    grad.truncate(n_phi + c);
    (loss, grad)
}

/// First-order optimality certificate for the box-constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub loss: f64,
    /// Largest `|∂L/∂φ|` over coordinates strictly inside the box.
    pub max_inactive_grad: f64,
    /// Smallest `∂L/∂φ` over coordinates at the lower bound (should be ≥ −tol).
    pub min_lower_grad: f64,
    /// Largest `∂L/∂φ` over coordinates at the upper bound (should be ≤ tol).
    pub max_upper_grad: f64,
    /// Largest `|∂L/∂b|`.
    pub max_bias_grad: f64,
    pub active_lower: usize,
    pub active_upper: usize,
    /// Allowed violation `KKT_TOLERANCE · (1 + |L|)`.
    pub tolerance: f64,
    /// Largest violation divided by `1 + |L|`.
    pub scaled_residual: f64,
    pub passed: bool,
}

fn certificate(model: &LinearModel, loss: f64, grad: &[f64]) -> KktReport {
    let d = model.inputs();
    let mut r = KktReport {
        loss,
        max_inactive_grad: 0.0,
        min_lower_grad: f64::INFINITY,
        max_upper_grad: f64::NEG_INFINITY,
        max_bias_grad: 0.0,
        active_lower: 0,
        active_upper: 0,
        tolerance: KKT_TOLERANCE * (1.0 + loss.abs()),
        scaled_residual: 0.0,
        passed: false,
    };
    let mut violation: f64 = 0.0;
    for (k, row) in model.phi.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            let g = grad[k * d + j];
            if w <= 0.0 {
                r.active_lower += 1;
                r.min_lower_grad = r.min_lower_grad.min(g);
                violation = violation.max(-g);
            } else if w >= 1.0 {
                r.active_upper += 1;
                r.max_upper_grad = r.max_upper_grad.max(g);
                violation = violation.max(g);
            } else {
                r.max_inactive_grad = r.max_inactive_grad.max(g.abs());
                violation = violation.max(g.abs());
            }
        }
    }
    for g in &grad[model.classes() * d..] {
        r.max_bias_grad = r.max_bias_grad.max(g.abs());
        violation = violation.max(g.abs());
    }
    r.scaled_residual = violation / (1.0 + loss.abs());
    r.passed = r.scaled_residual <= KKT_TOLERANCE;
    r
}

/// Evaluates the KKT certificate of `model` on `data`.
pub fn kkt_report(model: &LinearModel, data: &LabeledDataset, exec: Exec) -> KktReport {
    let (loss, grad) = loss_and_gradient(model, data, exec);
    certificate(model, loss, &grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub exec: Exec,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            armijo: 1e-4,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub kkt: KktReport,
    /// Loss at the start and after every 10th iteration.
    pub loss_trace: Vec<f64>,
}

fn unflatten(theta: &[f64], c: usize, d: usize) -> LinearModel {
    LinearModel {
        phi: theta[..c * d].chunks(d).map(<[f64]>::to_vec).collect(),
        bias: theta[c * d..].to_vec(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains `phi ∈ [0,1]^{C×d}` and an unconstrained bias on a classification set.
///
/// `dims` is `(classes, inputs)` and must match the dataset.
pub fn train_constrained_linear(data: &LabeledDataset, dims: (usize, usize), cfg: &PgdConfig) -> Result<LinearFit> {
    let (c, d) = dims;
    if data.task() != Task::Classification {
        return Err(Error::Config("constrained softmax training needs a classification set".into()));
    }
    if data.is_empty() {
        return Err(Error::DegenerateData("empty training set".into()));
    }
    if data.output_dim() != c || data.input_dim() != d {
        return Err(Error::Dimension {
            expected: c * d,
            got: data.output_dim() * data.input_dim(),
        });
    }
    let n_phi = c * d;
    let project = |theta: &mut [f64]| {
        for w in &mut theta[..n_phi] {
            *w = w.clamp(0.0, 1.0);
        }
    };
    let eval = |theta: &[f64]| loss_and_gradient(&unflatten(theta, c, d), data, cfg.exec);

    let mut theta = vec![0.5; n_phi];
    theta.extend(std::iter::repeat_n(0.0, c));
    let (mut f, mut g) = eval(&theta);
    let mut loss_trace = vec![f];
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = 1.0 / (1.0 + g_inf);

    for it in 0..cfg.max_iter {
        let kkt = certificate(&unflatten(&theta, c, d), f, &g);
        if kkt.passed {
            return Ok(LinearFit {
                model: unflatten(&theta, c, d),
                iterations: it,
                kkt,
                loss_trace,
            });
        }
        let mut t = step;
        let (candidate, fc, gc) = loop {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x - t * gi).collect();
            project(&mut cand);
            let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let (fc, gc) = eval(&cand);
            if fc <= f + cfg.armijo * dot(&g, &s) || t < 1e-30 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = candidate.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(1e-12, 1e12)
        } else {
            (2.0 * t).min(1e12)
        };
        theta = candidate;
        f = fc;
        g = gc;
        if (it + 1) % 10 == 0 {
            loss_trace.push(f);
        }
        if !f.is_finite() {
            return Err(Error::Diverged(format!("loss became {f} at iteration {it}")));
        }
    }
    let kkt = certificate(&unflatten(&theta, c, d), f, &g);
    if kkt.passed {
        return Ok(LinearFit {
            model: unflatten(&theta, c, d),
            iterations: cfg.max_iter,
            kkt,
            loss_trace,
        });
    }
    Err(Error::Training {
        iterations: cfg.max_iter,
        kkt_residual: kkt.scaled_residual,
        last_iterate: theta,
    })
}
