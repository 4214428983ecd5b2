use mena_core::device::VariabilitySpec;
use mena_core::pipelines::digits::{embedded_digits, prepare_digits};
use mena_core::pipelines::{
    pca_project, run_digits_experiment, run_robot_experiment, threshold_sweep, train_test_split, ExperimentConfig,
    Pca,
};
use mena_core::programming::Method;
use mena_core::training::MlpTrainConfig;
use proptest::prelude::*;

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn covariance(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, d) = (data.len(), data[0].len());
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| data.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n as f64 - 1.0))
                .collect()
        })
        .collect()
}

#[test]
fn captured_variance_matches_jacobi_oracle() {
    let images = embedded_digits().binary();
    let (_, pca) = pca_project(&images.pixels, 8).unwrap();
    let oracle = jacobi_eigenvalues(covariance(&images.pixels));
    let top8: f64 = oracle[..8].iter().sum();
    assert!((pca.captured_variance() - top8).abs() <= 1e-8 * top8.max(1.0), "{} vs {top8}", pca.captured_variance());
}

#[test]
fn score_covariance_is_diagonal_and_ordered() {
    let images = embedded_digits().binary();
    let (scores, _) = pca_project(&images.pixels, 8).unwrap();
    let cov = covariance(&scores);
    for i in 0..8 {
        for j in 0..8 {
            if i != j {
                assert!(cov[i][j].abs() < 1e-8 * cov[0][0], "({i},{j}) = {}", cov[i][j]);
            }
        }
        if i > 0 {
            assert!(cov[i][i] <= cov[i - 1][i - 1] + 1e-9);
        }
    }
}

#[test]
fn basis_is_refit_on_training_rows_only() {
    let images = embedded_digits().binary();
    let prep = prepare_digits(&images, 8, 0.7, 11).unwrap();
    let train: Vec<Vec<f64>> = prep.train_indices.iter().map(|&i| images.pixels[i].clone()).collect();
    let all = Pca::fit(&images.pixels, 8).unwrap();
    assert_eq!(Pca::fit(&train, 8).unwrap(), prep.pca);
    assert_ne!(all, prep.pca);
    let scores = prep.pca.project_all(&train);
    let lo = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((prep.scaler.min, prep.scaler.max), (lo, hi));
}

proptest! {
    #[test]
    fn split_is_a_seeded_partition(n in 10usize..500, frac in 0.2f64..0.8, seed in any::<u64>()) {
        let (train, test) = train_test_split(n, frac, seed).unwrap();
        prop_assert_eq!(train_test_split(n, frac, seed).unwrap(), (train.clone(), test.clone()));
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert!(train.iter().all(|i| test.binary_search(i).is_err()));
    }

    #[test]
    fn sweep_endpoints_are_constant_classifiers(p in prop::collection::vec(1e-9f64..1.0 - 1e-9, 1..100), seed in any::<u64>()) {
        let labels: Vec<usize> = p.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as usize).collect();
        let s = threshold_sweep(&p, &labels);
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64;
        prop_assert_eq!(s.thresholds.len(), s.accuracy.len());
        prop_assert!((s.accuracy[0] - ones).abs() < 1e-12);
        prop_assert!((s.accuracy[100] - (1.0 - ones)).abs() < 1e-12);
        prop_assert!(s.accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}

fn ideal() -> VariabilitySpec {
    VariabilitySpec::ideal(0.06)
}

#[test]
fn ideal_device_matches_software_digits() {
    for seed in [1, 2, 3] {
        let r = run_digits_experiment(&ExperimentConfig {
            seed,
            variability: ideal(),
            ..Default::default()
        })
        .unwrap();
        assert!(
            r.best_accuracy >= r.software_best_accuracy - 0.02,
            "seed {seed}: chip {} software {}",
            r.best_accuracy,
            r.software_best_accuracy
        );
    }
}

#[test]
fn ideal_device_matches_software_robot() {
    let r = run_robot_experiment(&ExperimentConfig {
        seed: 2,
        variability: ideal(),
        ..Default::default()
    })
    .unwrap();
    let (sw, tuned) = (r.rmse_software.overall, r.rmse_chip_finetuned.overall);
    assert!((tuned - sw).abs() <= 0.05 * sw, "software {sw} chip {tuned}");
}

#[test]
fn outputs_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        seed: 3,
        method: Method::Pi,
        ..Default::default()
    };
    let d = run_digits_experiment(&cfg).unwrap();
    d.write_outputs(dir.path()).unwrap();
    let sweep = std::fs::read_to_string(dir.path().join("digits_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 102);
    assert!(sweep.starts_with("threshold,chip_accuracy,software_accuracy\n0.00,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("digits_report.json")).unwrap()).unwrap();
    for key in ["sweep", "best_accuracy", "programming", "software_accuracy", "generated_at_unix"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["config"]["method"], "pi");

    let cfg = ExperimentConfig {
        seed: 3,
        robot_samples: 400,
        mlp: MlpTrainConfig { epochs: 30, ..Default::default() },
        ..Default::default()
    };
    let r = run_robot_experiment(&cfg).unwrap();
    r.write_outputs(dir.path()).unwrap();
    let preds = std::fs::read_to_string(dir.path().join("robot_predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("t,v_true,v_pred,steer_true,steer_pred"));
    assert_eq!(lines.count(), r.n_test);
    assert_eq!(r.n_test, 120);
    let times: Vec<f64> = r.held_out.rows.iter().map(|row| row.t).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn user_supplied_trajectory_with_bad_row_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    std::fs::write(&path, "t,x,y,theta,v_cmd,steer_cmd\n0,1,1,0,0.5,0\n0.1,1,1,zero,0.5,0\n").unwrap();
    let cfg = ExperimentConfig {
        dataset: Some(path),
        ..Default::default()
    };
    let err = run_robot_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("theta"), "{err}");
}
