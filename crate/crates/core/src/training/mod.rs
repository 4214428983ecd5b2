//! Off-chip training of the crossbar-resident layer and chip-in-the-loop
//! fine-tuning of the parameters downstream of it.

mod finetune;
mod linear;
mod mlp;

pub use finetune::{chip_dataset_loss, finetune_bias_chip_in_loop, BiasFinetune};
pub use linear::{
    kkt_report, loss_and_gradient, train_constrained_linear, KktReport, LinearFit, LinearModel, PgdConfig,
    KKT_TOLERANCE,
};
pub use mlp::{
    finetune_layer2_chip_in_loop, layer2_gradients, sample_loss, train_mlp_software, MlpFit, MlpModel,
    MlpTrainConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-Σ y_i ln(max(p_i, 1e-12))`.
pub fn cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    -p.iter()
        .zip(y)
        .map(|(&p, &y)| if y == 0.0 { 0.0 } else { y * p.max(PROB_FLOOR).ln() })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// Inputs in `[0, 1]^d` with one-hot labels or real-valued targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    task: Task,
}

fn check_inputs(inputs: &[Vec<f64>]) -> Result<usize> {
    let d = inputs.first().map_or(0, Vec::len);
    for (row, x) in inputs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("input row {row} has component {v} outside [0, 1]")));
        }
    }
    Ok(d)
}

impl LabeledDataset {
    /// Classification set from integer labels in `0..classes`.
    pub fn classification(inputs: Vec<Vec<f64>>, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != inputs.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        let targets = labels
            .iter()
            .map(|&l| {
                if l >= classes {
                    return Err(Error::Range(format!("label {l} outside 0..{classes}")));
                }
                let mut y = vec![0.0; classes];
                y[l] = 1.0;
                Ok(y)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::classification_one_hot(inputs, targets)
    }

    pub fn classification_one_hot(inputs: Vec<Vec<f64>>, labels: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != inputs.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        check_inputs(&inputs)?;
        for (row, y) in labels.iter().enumerate() {
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            let zeros = y.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != y.len() {
                return Err(Error::Range(format!("label row {row} is not one-hot")));
            }
        }
        Ok(Self {
            inputs,
            targets: labels,
            task: Task::Classification,
        })
    }

    pub fn regression(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if targets.len() != inputs.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        check_inputs(&inputs)?;
        if targets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Range("regression targets must be finite".into()));
        }
        Ok(Self {
            inputs,
            targets,
            task: Task::Regression,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// One-hot labels or regression targets.
    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Class index of each row (classification only).
    pub fn labels(&self) -> Vec<usize> {
        self.targets
            .iter()
            .map(|y| y.iter().position(|&v| v == 1.0).unwrap_or(0))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            task: self.task,
        }
    }
}

/// Zero-pads `x` to the crossbar's row count.
pub(crate) fn pad_input(x: &[f64], rows: usize) -> Vec<f64> {
    let mut v = vec![0.0; rows];
    v[..x.len()].copy_from_slice(x);
    v
}

pub(crate) fn check_fits_crossbar(data: &LabeledDataset, rows: usize, outputs: usize, cols: usize) -> Result<()> {
    if data.input_dim() > rows {
        return Err(Error::Dimension {
            expected: rows,
            got: data.input_dim(),
        });
    }
    if outputs > cols {
        return Err(Error::Dimension {
            expected: cols,
            got: outputs,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_reference_values() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_reference_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], &[1.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        let floored = cross_entropy(&[1e-15, 1.0 - 1e-15], &[1.0, 0.0]);
        assert!((floored - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::classification(vec![vec![0.5]], &[2], 2).is_err());
        assert!(LabeledDataset::classification(vec![vec![1.5]], &[0], 2).is_err());
        assert!(LabeledDataset::classification(vec![vec![0.5]], &[0, 1], 2).is_err());
        assert!(LabeledDataset::classification_one_hot(vec![vec![0.5]], vec![vec![1.0, 1.0]]).is_err());
        assert!(LabeledDataset::regression(vec![vec![0.5]], vec![vec![f64::NAN]]).is_err());
        let d = LabeledDataset::classification(vec![vec![0.1, 0.2], vec![0.3, 0.4]], &[1, 0], 2).unwrap();
        assert_eq!(d.labels(), vec![1, 0]);
        assert_eq!(d.subset(&[1]).inputs(), &[vec![0.3, 0.4]]);
        assert_eq!((d.input_dim(), d.output_dim(), d.task()), (2, 2, Task::Classification));
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_is_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 1..12)) {
                let p = softmax(&z);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
