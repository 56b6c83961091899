use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oncosurv::exec::Execution;
use oncosurv::survival::{concordance_index, fit_forest_with, permutation_importance, ForestConfig};
use oncosurv::synth::weibull::{weibull_cohort, WeibullConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fit(c: &mut Criterion) {
    let data = weibull_cohort(&WeibullConfig { n: 1000, ..Default::default() }, 1);
    let cfg = ForestConfig { n_trees: 50, ..Default::default() };
    let mut g = c.benchmark_group("fit_forest");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_forest_with(black_box(&data), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn predict(c: &mut Criterion) {
    let data = weibull_cohort(&WeibullConfig { n: 1000, ..Default::default() }, 2);
    let model = fit_forest_with(&data, &ForestConfig { n_trees: 100, ..Default::default() }, Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("predict_survival");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.predict_survival(black_box(&data.x), exec).unwrap())
        });
    }
    g.finish();
}

fn importance(c: &mut Criterion) {
    let data = weibull_cohort(&WeibullConfig { n: 500, ..Default::default() }, 3);
    let model = fit_forest_with(&data, &ForestConfig { n_trees: 30, ..Default::default() }, Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("permutation_importance");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| permutation_importance(&model, &data.x, &data.y, 2, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn cindex(c: &mut Criterion) {
    let data = weibull_cohort(&WeibullConfig { n: 20_000, n_noise: 0, ..Default::default() }, 4);
    let risk: Vec<f64> = data.x.column(0).to_vec();
    c.bench_function("concordance_index/20000", |b| b.iter(|| concordance_index(black_box(&risk), &data.y).unwrap()));
}

criterion_group!(benches, fit, predict, importance, cindex);
criterion_main!(benches);
