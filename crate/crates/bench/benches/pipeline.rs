//! Throughput benchmarks for the hot stages of the link pipeline:
//! shaping, pulse shaping, receive DSP, and the security analysis.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use cvqkd_core::constellation::build_mb_constellation;
use cvqkd_core::harness::{
    prepare_frame, propagate_and_detect, shape_payload, transmit, ExperimentConfig, FrameConfig,
};
use cvqkd_core::rate::{secret_key_rate, ZModel};
use cvqkd_core::rxchain::demodulate;
use cvqkd_core::seed;
use cvqkd_core::shaping::rng_bits;

fn bench_cfg(n_symbols: usize) -> ExperimentConfig {
    ExperimentConfig {
        frame: FrameConfig {
            n_symbols,
            training_ratio: 0.2,
        },
        ..ExperimentConfig::default()
    }
}

fn shaping(c: &mut Criterion) {
    let mut g = c.benchmark_group("shaping");
    let con = build_mb_constellation(256, 0.023)
        .unwrap()
        .scale_to_variance(14.35)
        .unwrap();
    for &n in &[1024usize, 16 * 1024] {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("ccdm", n), &n, |b, &n| {
            b.iter(|| {
                let mut bits = rng_bits(seed::rng(1, "bench-bits", 0));
                shape_payload(black_box(&con), n, 1024, &mut bits).unwrap()
            })
        });
    }
    g.finish();
}

fn tx_synthesis(c: &mut Criterion) {
    let mut g = c.benchmark_group("tx");
    g.sample_size(10);
    for &n in &[10_000usize, 50_000] {
        let cfg = bench_cfg(n);
        let pf = prepare_frame(&cfg, 0).unwrap();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("modulate", n), &n, |b, _| {
            b.iter(|| transmit(black_box(&cfg), black_box(&pf)).unwrap())
        });
    }
    g.finish();
}

fn rx_dsp(c: &mut Criterion) {
    let mut g = c.benchmark_group("rx");
    g.sample_size(10);
    for &n in &[10_000usize, 50_000] {
        let cfg = bench_cfg(n);
        let pf = prepare_frame(&cfg, 0).unwrap();
        let tx = transmit(&cfg, &pf).unwrap();
        let rx = propagate_and_detect(&cfg, &tx, 0);
        let dsp = cfg.dsp_for_link();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("demodulate", n), &n, |b, _| {
            b.iter(|| {
                demodulate(
                    black_box(&rx),
                    &dsp,
                    &cfg.detector,
                    &pf.layout,
                    &pf.training,
                    None,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn security(c: &mut Criterion) {
    let mut g = c.benchmark_group("rate");
    let cfg = bench_cfg(100_000);
    let params = cfg.rate_params();
    g.bench_function("gaussian", |b| {
        b.iter(|| secret_key_rate(black_box(&params), None).unwrap())
    });
    let con = build_mb_constellation(64, 0.079)
        .unwrap()
        .scale_to_variance(4.457)
        .unwrap();
    let dm = cvqkd_core::rate::RateParams {
        z_model: ZModel::DmDenys,
        v_a: 4.457,
        ..params
    };
    g.sample_size(10);
    g.bench_function("dm-denys-64", |b| {
        b.iter(|| secret_key_rate(black_box(&dm), Some(&con)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, shaping, tx_synthesis, rx_dsp, security);
criterion_main!(benches);
