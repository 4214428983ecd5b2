//! Principal component projection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` orthonormal directions, each of length `d`.
    pub basis: Vec<Vec<f64>>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits on `data` (rows are samples). Covariance uses the `n - 1` normalizer.
    ///
    /// Each direction is sign-fixed so its largest-magnitude entry is positive.
    pub fn fit(data: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = data.len();
        let d = data.first().map_or(0, Vec::len);
        if n < k.max(2) || k == 0 || k > d {
            return Err(Error::DegenerateData(format!("cannot extract {k} components from {n}x{d} data")));
        }
        if let Some(bad) = data.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension { expected: d, got: bad.len() });
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("non-finite value in PCA input".into()));
        }
        let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        if eigenvalues[0] <= 0.0 {
            return Err(Error::DegenerateData("all rows are identical".into()));
        }
        let basis = order[..k]
            .iter()
            .map(|&c| {
                let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
                let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                if pivot < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Self { mean, basis, eigenvalues })
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().zip(x).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect()
    }

    pub fn project_all(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter().map(|x| self.project(x)).collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (s, b) in scores.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += s * bi;
            }
        }
        x
    }

    /// Sum of the top-`k` eigenvalues.
    pub fn captured_variance(&self) -> f64 {
        self.eigenvalues[..self.k()].iter().sum()
    }
}

/// Fits on `data` and returns the scores together with the fitted projection.
pub fn pca_project(data: &[Vec<f64>], k: usize) -> Result<(Vec<Vec<f64>>, Pca)> {
    let pca = Pca::fit(data, k)?;
    Ok((pca.project_all(data), pca))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_data() -> Vec<Vec<f64>> {
        let mut u = vec![0.0; 64];
        let mut v = vec![0.0; 64];
        u[3] = 0.6;
        u[10] = 0.8;
        v[20] = 1.0;
        (0..40)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.37).sin() * 3.0, (i as f64 * 1.3).cos());
                (0..64).map(|j| 2.0 + a * u[j] + b * v[j]).collect()
            })
            .collect()
    }

    #[test]
    fn exact_subspace_reconstructs() {
        let data = plane_data();
        let (scores, pca) = pca_project(&data, 2).unwrap();
        for (x, s) in data.iter().zip(&scores) {
            let r = pca.reconstruct(s);
            assert!(x.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-9));
        }
        assert!(pca.eigenvalues[2..].iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn basis_is_orthonormal() {
        let (_, pca) = pca_project(&plane_data(), 5).unwrap();
        for (i, a) in pca.basis.iter().enumerate() {
            for (j, b) in pca.basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let data = vec![vec![1.0, 2.0, 3.0]; 10];
        assert!(matches!(Pca::fit(&data, 2), Err(Error::DegenerateData(_))));
        assert!(Pca::fit(&data[..1], 1).is_err());
    }
}
