use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded shuffle split; returns sorted `(train, test)` index sets.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("split {train_fraction} must lie in (0, 1)")));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::DegenerateData(format!(
            "split {train_fraction} of {n} rows leaves an empty train or test set"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_disjoint() {
        let a = train_test_split(360, 0.7, 4).unwrap();
        assert_eq!(a, train_test_split(360, 0.7, 4).unwrap());
        assert_ne!(a, train_test_split(360, 0.7, 5).unwrap());
        assert_eq!((a.0.len(), a.1.len()), (252, 108));
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..360).collect::<Vec<_>>());
    }

    #[test]
    fn empty_test_set_is_rejected() {
        assert!(matches!(train_test_split(360, 0.999, 1), Err(Error::DegenerateData(_))));
        assert!(matches!(train_test_split(10, 1.0, 1), Err(Error::Config(_))));
    }
}
