use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_fits_crossbar, cross_entropy, pad_input, softmax, LabeledDataset, Task};
use crate::backend::Backend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFinetune {
    /// Seeded standard-normal starting point.
    pub init_bias: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Chip-in-the-loop SGD on the output bias.
///
/// Each step draws a training row uniformly, reads the crossbar, and applies
/// `b ← b − η (softmax(O + b) − y)`. The bias has one entry per class; the
/// class scores are the first `classes` output lanes.
pub fn finetune_bias_chip_in_loop<B: Backend + ?Sized>(
    h: &mut B,
    data: &LabeledDataset,
    eta: f64,
    n_step: usize,
    seed: u64,
) -> Result<BiasFinetune> {
    if data.task() != Task::Classification || data.is_empty() {
        return Err(Error::Config("bias fine-tuning needs a non-empty classification set".into()));
    }
    let (rows, cols) = h.dims();
    let classes = data.output_dim();
    check_fits_crossbar(data, rows, classes, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init_bias: Vec<f64> = (0..classes).map(|_| rng.sample(StandardNormal)).collect();
    let mut bias = init_bias.clone();
    for _ in 0..n_step {
        let i = rng.random_range(0..data.len());
        let out = h.infer(&pad_input(&data.inputs()[i], rows))?;
        let a: Vec<f64> = out[..classes].iter().zip(&bias).map(|(o, b)| o + b).collect();
        let p = softmax(&a);
        for ((b, p), y) in bias.iter_mut().zip(&p).zip(&data.targets()[i]) {
            *b -= eta * (p - y);
        }
    }
    Ok(BiasFinetune { init_bias, bias })
}

/// Summed cross-entropy of `softmax(O + bias)` over `data`, with `O` read from the chip.
pub fn chip_dataset_loss<B: Backend + ?Sized>(h: &mut B, data: &LabeledDataset, bias: &[f64]) -> Result<f64> {
    let rows = h.dims().0;
    let mut total = 0.0;
    for (x, y) in data.inputs().iter().zip(data.targets()) {
        let out = h.infer(&pad_input(x, rows))?;
        let a: Vec<f64> = out.iter().zip(bias).map(|(o, b)| o + b).collect();
        total += cross_entropy(&softmax(&a), y);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::DirectBackend;
    use crate::device::{CrossbarModel, VariabilitySpec};

    fn data() -> LabeledDataset {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0; 8]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        LabeledDataset::classification(inputs, &labels, 2).unwrap()
    }

    #[test]
    fn zero_learning_rate_returns_initialization() {
        let mut b = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap());
        let r = finetune_bias_chip_in_loop(&mut b, &data(), 0.0, 50, 9).unwrap();
        assert_eq!(r.bias, r.init_bias);
        let again = finetune_bias_chip_in_loop(&mut b, &data(), 0.0, 0, 9).unwrap();
        assert_eq!(again.init_bias, r.init_bias);
    }

    #[test]
    fn fine_tuning_reduces_loss() {
        let mut b = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::default(), 1).unwrap());
        let d = data();
        let r = finetune_bias_chip_in_loop(&mut b, &d, 0.05, 2000, 3).unwrap();
        let before = chip_dataset_loss(&mut b, &d, &r.init_bias).unwrap();
        let after = chip_dataset_loss(&mut b, &d, &r.bias).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn too_many_classes_for_the_crossbar() {
        let mut b = DirectBackend::new(CrossbarModel::new(8, 2, VariabilitySpec::default(), 1).unwrap());
        let d = LabeledDataset::classification(vec![vec![0.5; 8]], &[2], 3).unwrap();
        assert!(finetune_bias_chip_in_loop(&mut b, &d, 0.1, 1, 0).is_err());
    }
}
