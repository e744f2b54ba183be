use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use rppg_bench::recording;
use rppg_core::filter::{design_cheby2_bandpass, filtfilt};
use rppg_core::model::{prepare_input, FpnConfig, FpnModel};
use rppg_core::pipeline::{synchronize, unsupervised_ppg};
use rppg_core::rppg::RppgMethod;

fn inference(c: &mut Criterion) {
    let rec = recording(1);
    let x = prepare_input(&rec.traces);
    let model = FpnModel::new(FpnConfig::default(), 1).unwrap();
    c.bench_function("forward default model, 20 s at 30 fps", |b| b.iter(|| model.forward(black_box(&x)).unwrap()));
    let tiny = FpnModel::new(FpnConfig::tiny(x.channels, model.config().targets.clone()), 1).unwrap();
    c.bench_function("forward tiny model, 20 s at 30 fps", |b| b.iter(|| tiny.forward(black_box(&x)).unwrap()));
}

fn signal(c: &mut Criterion) {
    let rec = recording(2);
    let f = design_cheby2_bandpass(4, 0.4, 8.0, 30.0, 100.0).unwrap();
    c.bench_function("filtfilt 20 s at 100 Hz", |b| b.iter(|| filtfilt(&f, black_box(&rec.reference_ppg)).unwrap()));
    for m in [RppgMethod::Pos, RppgMethod::Chrom, RppgMethod::Pbv, RppgMethod::Omit] {
        c.bench_function(&format!("{m:?} on 7 regions"), |b| b.iter(|| unsupervised_ppg(black_box(&rec.traces), m).unwrap()));
    }
    c.bench_function("synchronize one recording", |b| {
        b.iter(|| synchronize(black_box(&rec.traces), &rec.reference_ppg, Some(&rec.clock_labels)).unwrap())
    });
}

criterion_group!(benches, inference, signal);
criterion_main!(benches);
