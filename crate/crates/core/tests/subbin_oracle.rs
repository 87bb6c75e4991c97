use shelving_core::atomic::AtomicConstants;
use shelving_core::classify::SubbinModel;
use shelving_core::mc::{ProtocolConfig, Schedule, Simulator};
use shelving_core::Label;

mod common;
use common::{for_each_vector, oracle_label};

fn agreement(t: f64, per_class: usize, seed: u64) -> f64 {
    let atomic = AtomicConstants::default();
    let cfg = ProtocolConfig::standard().with_detection_time(t);
    let model = SubbinModel::from_protocol(&cfg, &atomic, t, 5).unwrap();
    let sim = Simulator::new(cfg, &atomic).unwrap();
    let rows = sim.run_batch_map(per_class, per_class, Schedule::Interleave, seed, |s| s.bin_counts(5));
    let agree = rows
        .iter()
        .filter(|c| model.classify_counts(c).unwrap().0 == oracle_label(&model, c))
        .count();
    agree as f64 / rows.len() as f64
}

#[test]
fn midpoint_labels_agree_with_grid_integration() {
    let a = agreement(0.15e-3, 5_000, 1);
    assert!(a >= 0.999, "{a}");
}

#[test]
fn midpoint_approximation_degrades_gracefully_for_longer_subbins() {
    let a = agreement(0.25e-3, 2_500, 2);
    assert!(a >= 0.99, "{a}");
}

#[test]
fn likelihoods_normalize_over_count_space() {
    let cfg = ProtocolConfig::standard().with_detection_time(0.1e-3);
    let model = SubbinModel::from_protocol(&cfg, &AtomicConstants::default(), 0.1e-3, 5).unwrap();
    let (mut dark, mut bright) = (0.0, 0.0);
    for_each_vector(5, 20, &mut |c| {
        dark += model.log_likelihood(c, Label::Dark).exp();
        bright += model.log_likelihood(c, Label::Bright).exp();
    });
    assert!((dark - 1.0).abs() < 1e-9, "dark {dark}");
    assert!((bright - 1.0).abs() < 1e-9, "bright {bright}");
}

#[test]
fn single_subbin_reduces_to_a_count_threshold() {
    let cfg = ProtocolConfig::standard().with_detection_time(0.2e-3);
    let model = SubbinModel::from_protocol(&cfg, &AtomicConstants::default(), 0.2e-3, 1).unwrap();
    let labels: Vec<Label> = (0..80).map(|n| model.classify_counts(&[n]).unwrap().0).collect();
    let switch = labels.iter().position(|l| l.is_bright()).expect("some count reads bright");
    assert!(switch > 0);
    assert!(labels[switch..].iter().all(|l| l.is_bright()));
    assert!(labels[..switch].iter().all(|l| !l.is_bright()));
}

#[test]
fn order_of_counts_matters_only_with_leakage() {
    let atomic = AtomicConstants::default();
    let cfg = ProtocolConfig::standard().with_detection_time(0.5e-3);
    let leaky = SubbinModel::from_protocol(&cfg, &atomic, 0.5e-3, 5).unwrap();
    let early = [6, 3, 0, 0, 0];
    let late = [0, 0, 0, 3, 6];
    assert_ne!(leaky.log_likelihood_ratio(&early), leaky.log_likelihood_ratio(&late));
    let plain = SubbinModel { tau_bright: None, tau_dark: None, ..leaky };
    let d = plain.log_likelihood_ratio(&early) - plain.log_likelihood_ratio(&late);
    assert!(d.abs() < 1e-12);
}
