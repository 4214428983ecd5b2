use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mena_core::backend::DirectBackend;
use mena_core::device::{CrossbarModel, VariabilitySpec};
use mena_core::parallel::{self, Exec};
use mena_core::pipelines::threshold_sweep;
use mena_core::programming::{program_array, Method, TargetGrid, VipiConfig};
use mena_core::training::{loss_and_gradient, LabeledDataset, LinearModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn batch_gradient(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let data = LabeledDataset::classification(inputs, &labels, 2).unwrap();
    let model = LinearModel {
        phi: vec![vec![0.5; 8]; 2],
        bias: vec![0.0; 2],
    };
    let mut g = c.benchmark_group("batch_gradient");
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| loss_and_gradient(&model, &data, e))
        });
    }
    g.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..16).collect();
    let targets = TargetGrid::full(&vec![vec![0.5; 8]; 8]);
    let mut g = c.benchmark_group("programming_seed_sweep");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| {
                parallel::map(e, &seeds, |&s| {
                    let mut h = DirectBackend::new(CrossbarModel::with_seed(VariabilitySpec::default(), s).unwrap());
                    program_array(&mut h, &targets, &VipiConfig::default(), Method::Vipi)
                        .unwrap()
                        .e_tot
                })
            })
        });
    }
    g.finish();
}

fn monte_carlo_sweeps(c: &mut Criterion) {
    let trials = 256;
    let mut g = c.benchmark_group("threshold_sweep_monte_carlo");
    for exec in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| {
                parallel::map_range(e, trials, |t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
                    let labels: Vec<usize> = (0..2000).map(|_| rng.random_range(0..2)).collect();
                    let p1: Vec<f64> = labels
                        .iter()
                        .map(|&l| (0.3 * l as f64 + rng.random_range(0.0..0.7)).min(1.0))
                        .collect();
                    threshold_sweep(&p1, &labels).best().0
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, batch_gradient, seed_sweep, monte_carlo_sweeps);
criterion_main!(benches);
