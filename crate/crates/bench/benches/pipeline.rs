use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use shelving_core::atomic::AtomicConstants;
use shelving_core::camera::{render_frame, FeatureSet, FrameSpec, Roi};
use shelving_core::classify::{fit_threshold, train_classifier, ForestParams, SubbinModel};
use shelving_core::mc::{ProtocolConfig, Schedule, Simulator};
use shelving_core::transfer::rap_max_transfer;
use shelving_core::Label;

fn simulate(c: &mut Criterion) {
    let sim = Simulator::with_defaults(ProtocolConfig::d52_shelved().with_detection_time(0.3e-3)).unwrap();
    c.bench_function("simulate 1000+1000 trials", |b| {
        b.iter(|| sim.run_batch_map(1_000, 1_000, Schedule::Interleave, black_box(7), |s| s.total()))
    });
}

fn classify(c: &mut Criterion) {
    let t = 0.15e-3;
    let cfg = ProtocolConfig::standard().with_detection_time(t);
    let sim = Simulator::with_defaults(cfg.clone()).unwrap();
    let rows = sim.run_batch_map(500, 500, Schedule::Interleave, 3, |s| (s.true_label, s.bin_counts(5)));
    let model = SubbinModel::from_protocol(&cfg, &AtomicConstants::default(), t, 5).unwrap();
    c.bench_function("subbin classify 1000 vectors", |b| {
        b.iter(|| rows.iter().filter(|(_, c)| model.classify_counts(c).unwrap().0.is_bright()).count())
    });
    let totals: Vec<f64> = rows.iter().map(|(_, c)| c.iter().sum::<u32>() as f64).collect();
    let labels: Vec<Label> = rows.iter().map(|(l, _)| *l).collect();
    c.bench_function("fit threshold 1000 trials", |b| b.iter(|| fit_threshold(black_box(&totals), &labels).unwrap()));
}

fn camera(c: &mut Criterion) {
    let spec = FrameSpec::default();
    c.bench_function("render frame", |b| b.iter(|| render_frame(black_box(20), &spec, 11)));

    let roi = Roi::around(spec.psf_center, spec.psf_sigma, spec.width, spec.height).unwrap();
    let labels: Vec<Label> = (0..400).map(|i| if i % 2 == 0 { Label::Dark } else { Label::Bright }).collect();
    let features: Vec<Vec<f64>> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let f = render_frame(if l.is_bright() { 15 } else { 1 }, &spec, i as u64);
            roi.features(&f, FeatureSet::Augmented).unwrap()
        })
        .collect();
    let params = ForestParams { n_trees: 20, ..ForestParams::default() };
    c.bench_function("train 20-tree forest on 400 frames", |b| {
        b.iter(|| train_classifier(&features, &labels, &params).unwrap())
    });
}

fn transfer(c: &mut Criterion) {
    c.bench_function("rap max transfer", |b| b.iter(|| rap_max_transfer(black_box(19e3), 2.6e3).unwrap()));
}

criterion_group!(benches, simulate, classify, camera, transfer);
criterion_main!(benches);
