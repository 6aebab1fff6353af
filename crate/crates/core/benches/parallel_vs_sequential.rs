use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nclab_core::data::synth_gaussian;
use nclab_core::densemat::Matrix;
use nclab_core::network::{ActivationSpec, NetworkConfig};
use nclab_core::ntk::dense_ntk;
use nclab_core::par;
use nclab_core::trainer::{init_params, train, InitSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn net() -> NetworkConfig {
    NetworkConfig {
        input_dim: 16,
        widths: vec![48, 48, 24, 4],
        l1: 2,
        l2: 2,
        activation: ActivationSpec::smoothed(0.1, 1.0),
    }
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [64, 128, 256] {
        let a = random(n, n, 1);
        let b = random(n, n, 2);
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |bch, _| {
            bch.iter(|| black_box(a.matmul_seq(&b)))
        });
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |bch, _| {
            bch.iter(|| black_box(a.matmul_par(&b)))
        });
    }
    g.finish();
}

fn ntk(c: &mut Criterion) {
    let cfg = net();
    let ds = synth_gaussian(16, 4, 6, 1.0, 0.5, 3).unwrap();
    let p = init_params(&cfg, &InitSpec::FanIn { gain: 1.0 }, 0).unwrap();
    let mut g = c.benchmark_group("dense_ntk");
    g.sample_size(10);
    g.bench_function("one_thread", |b| {
        b.iter(|| par::with_jobs(1, || black_box(dense_ntk(&cfg, &p, &ds.x).unwrap())))
    });
    g.bench_function("all_threads", |b| {
        b.iter(|| par::with_jobs(0, || black_box(dense_ntk(&cfg, &p, &ds.x).unwrap())))
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let cfg = net();
    let ds = synth_gaussian(16, 4, 64, 1.0, 0.5, 3).unwrap();
    let tc = TrainConfig {
        eta: 0.02,
        lambda: 1e-2,
        steps: 50,
        lr_drop_fraction: 1.0,
        lr_drop_factor: 10.0,
        record_every: 50,
        seed: 0,
        init: InitSpec::FanIn { gain: 1.0 },
    };
    let mut g = c.benchmark_group("train_50_steps");
    g.sample_size(10);
    for jobs in [1, 0] {
        let name = if jobs == 1 { "one_thread" } else { "all_threads" };
        g.bench_function(name, |b| {
            b.iter(|| par::with_jobs(jobs, || black_box(train(&cfg, &tc, &ds.x, &ds.y).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, ntk, training);
criterion_main!(benches);
