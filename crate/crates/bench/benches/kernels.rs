use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vast_core::conjugate::{collapsed_logml_multi, collapsed_logml_uni, MniwPrior, NigPrior};
use vast_core::{logistic, ModelConfig};

fn block(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |t, c| {
        let s = logistic(x[t], 2.0, 0.1);
        if c == 0 {
            s
        } else {
            1.0 - s
        }
    })
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
    c.bench_function("logistic/300", |b| b.iter(|| black_box(&x).iter().map(|v| logistic(*v, 2.0, 0.1)).sum::<f64>()));

    let z = block(&x);
    let r = DVector::from_fn(300, |_, _| StandardNormal.sample(&mut rng));
    let uni = NigPrior::from_config(&ModelConfig::ast(10));
    c.bench_function("collapsed_logml_uni/T300", |b| b.iter(|| collapsed_logml_uni(black_box(&r), black_box(&z), &uni).unwrap()));

    let rm = DMatrix::from_fn(300, 20, |_, _| StandardNormal.sample(&mut rng));
    let multi = MniwPrior::from_config(&ModelConfig::vast(10, 20, 2));
    c.bench_function("collapsed_logml_multi/T300_M20", |b| {
        b.iter(|| collapsed_logml_multi(black_box(&rm), black_box(&z), &multi).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
