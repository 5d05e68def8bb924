use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sleepstage::classifiers::{
    Dataset, DecisionTree, ForestParams, Mlp, MlpParams, RandomForest, TreeParams,
};
use sleepstage::dataset::window;
use sleepstage::signal_features::{band_powers, dft_power};
use sleepstage::synthetic::{generate_features, SyntheticSpec};
use sleepstage::FeatureRow;

fn windowed(per_class: usize) -> Dataset {
    let rows: Vec<FeatureRow> = generate_features(&SyntheticSpec::new(per_class, 0.8, 1))
        .unwrap()
        .into_iter()
        .map(FeatureRow::from)
        .collect();
    Dataset::from_samples(&window(&rows, 5).unwrap()).unwrap()
}

fn spectral(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let epoch: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("dft_power 5000 samples", |b| {
        b.iter(|| dft_power(black_box(&epoch), 500.0).unwrap())
    });
    let spectrum = dft_power(&epoch, 500.0).unwrap();
    c.bench_function("band_powers", |b| {
        b.iter(|| band_powers(black_box(&spectrum)).unwrap())
    });
}

fn trees(c: &mut Criterion) {
    let data = windowed(300);
    let mut g = c.benchmark_group("trees");
    g.sample_size(10);
    g.bench_function("decision tree fit, 896 x 210", |b| {
        b.iter(|| DecisionTree::fit(black_box(&data), &TreeParams::default()).unwrap())
    });
    let params = ForestParams {
        n_trees: 20,
        ..ForestParams::default()
    };
    g.bench_function("random forest fit, 20 trees", |b| {
        b.iter(|| RandomForest::fit(black_box(&data), &params).unwrap())
    });
    g.finish();
}

fn mlp(c: &mut Criterion) {
    let data = windowed(300);
    let params = MlpParams {
        epochs: 1,
        ..MlpParams::default()
    };
    let mut g = c.benchmark_group("mlp");
    g.sample_size(10);
    g.bench_function("one epoch, 896 x 210, hidden 256", |b| {
        b.iter(|| Mlp::fit(black_box(&data), &data, &params).unwrap())
    });
    g.finish();
}

criterion_group!(benches, spectral, trees, mlp);
criterion_main!(benches);
