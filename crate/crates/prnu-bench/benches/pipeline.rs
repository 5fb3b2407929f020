//! Hot-path benchmarks: residual extraction dominates everything (the
//! perturbation loop runs it twice per iteration), followed by pattern
//! estimation and scoring.

use criterion::{criterion_group, criterion_main, Criterion};

use prnu_bench::{capture, pattern, DIMS};
use prnu_core::denoise::{denoise, residual, DenoiseParams};
use prnu_core::fingerprint::{estimate_reference, ncc_arrays};
use prnu_core::image::Image;
use prnu_core::spoof::{perturb, PerturbParams};
use prnu_core::synth::{make_scene_bank, SyntheticSensor};

fn bench_denoise(c: &mut Criterion) {
    let img = capture(1);
    let params = DenoiseParams::default();
    c.bench_function("denoise_120x160", |b| {
        b.iter(|| denoise(&img, &params).unwrap())
    });
    c.bench_function("residual_120x160", |b| {
        b.iter(|| residual(&img, &params).unwrap())
    });
}

fn bench_scoring(c: &mut Criterion) {
    let img = capture(2);
    let params = DenoiseParams::default();
    let reference = pattern("score", 3, 10);
    let res = residual(&img, &params).unwrap();
    c.bench_function("ncc_120x160", |b| {
        b.iter(|| ncc_arrays(&res.values, &reference.values).unwrap())
    });
}

fn bench_estimation(c: &mut Criterion) {
    let sensor = SyntheticSensor::new("est", DIMS.0, DIMS.1, 0.02, 2.0, 7).unwrap();
    let scenes = make_scene_bank(10, DIMS, 8);
    let train: Vec<Image> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| sensor.capture(s, i as u64).unwrap())
        .collect();
    let params = DenoiseParams::default();
    c.bench_function("estimate_reference_10_images", |b| {
        b.iter(|| estimate_reference(&train, &params, "est").unwrap())
    });
}

fn bench_perturbation(c: &mut Criterion) {
    let source = pattern("src", 100, 8);
    let target = pattern("tgt", 101, 8);
    let input = capture(100);
    let candidate = capture(101);
    let dp = DenoiseParams::default();
    let params = PerturbParams {
        max_iters: 50,
        ..PerturbParams::default()
    };
    let mut group = c.benchmark_group("perturb");
    group.sample_size(10);
    group.bench_function("50_iterations_120x160", |b| {
        b.iter(|| perturb(&input, &candidate, &source, &target, &params, &dp).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_denoise,
    bench_scoring,
    bench_estimation,
    bench_perturbation
);
criterion_main!(benches);
