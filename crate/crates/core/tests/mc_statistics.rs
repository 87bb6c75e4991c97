use shelving_core::harness::with_threads;
use shelving_core::mc::{ProtocolConfig, Schedule, Simulator};
use shelving_core::transfer::PumpModel;
use shelving_core::Label;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and variance of Poisson(λ) samples within 3σ of λ.
fn assert_poisson(counts: &[f64], lambda: f64) {
    let n = counts.len() as f64;
    let (mean, var) = moments(counts);
    let se_mean = (lambda / n).sqrt();
    let se_var = ((lambda + 2.0 * lambda * lambda) / n).sqrt();
    assert!((mean - lambda).abs() < 3.0 * se_mean, "mean {mean} vs {lambda} (se {se_mean})");
    assert!((var - lambda).abs() < 3.0 * se_var, "variance {var} vs {lambda} (se {se_var})");
}

fn totals(sim: &Simulator, n_dark: usize, n_bright: usize, seed: u64) -> Vec<(Label, f64)> {
    sim.run_batch_map(n_dark, n_bright, Schedule::Interleave, seed, |s| (s.true_label, s.total() as f64))
}

#[test]
fn bright_counts_are_poisson_without_leakage() {
    let cfg = ProtocolConfig {
        tau_bright: None,
        tau_dark: None,
        ..ProtocolConfig::standard().with_detection_time(100e-6)
    };
    let lambda = (cfg.rate_bright + cfg.rate_background) * cfg.detection_time;
    let sim = Simulator::with_defaults(cfg).unwrap();
    let counts: Vec<f64> = totals(&sim, 0, 100_000, 11).into_iter().map(|(_, c)| c).collect();
    assert_poisson(&counts, lambda);
}

#[test]
fn d52_dark_return_fraction_matches_competing_risks() {
    let cfg = ProtocolConfig {
        shelving_error: Some(0.0),
        ..ProtocolConfig::d52_shelved().with_detection_time(0.4e-3)
    };
    let sim = Simulator::with_defaults(cfg).unwrap();
    let n = 100_000;
    let returned = sim
        .run_batch_map(n, 0, Schedule::Interleave, 5, |s| s.ever_bright())
        .into_iter()
        .filter(|&b| b)
        .count();
    let p = (1.0 - (-0.4f64 / 7.4).exp()) * 0.185;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let got = returned as f64 / n as f64;
    assert!((got - p).abs() < 3.0 * se, "{got} vs {p} ± {se}");
}

#[test]
fn standard_bright_mean_follows_two_state_rate_equation() {
    let t = 1e-3;
    let cfg = ProtocolConfig::standard().with_detection_time(t);
    let (a, b) = (1.0 / cfg.tau_bright.unwrap(), 1.0 / cfg.tau_dark.unwrap());
    // P_bright(s) = p∞ + (1 − p∞) e^{−(a+b)s}, integrated over [0, t].
    let p_inf = b / (a + b);
    let time_bright = p_inf * t + (1.0 - p_inf) * (1.0 - (-(a + b) * t).exp()) / (a + b);
    let expected = cfg.rate_background * t + cfg.rate_bright * time_bright;
    let sim = Simulator::with_defaults(cfg).unwrap();
    let counts: Vec<f64> = totals(&sim, 0, 50_000, 3).into_iter().map(|(_, c)| c).collect();
    let (mean, var) = moments(&counts);
    let se = (var / counts.len() as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} ± {se}");
}

#[test]
fn undisturbed_bright_trials_are_poisson() {
    let cfg = ProtocolConfig::standard().with_detection_time(0.5e-3);
    let lambda = (cfg.rate_bright + cfg.rate_background) * cfg.detection_time;
    let sim = Simulator::with_defaults(cfg).unwrap();
    let counts: Vec<f64> = sim
        .run_batch_map(0, 60_000, Schedule::Interleave, 8, |s| (s.undisturbed(), s.total() as f64))
        .into_iter()
        .filter_map(|(u, c)| u.then_some(c))
        .collect();
    assert!(counts.len() > 40_000);
    assert_poisson(&counts, lambda);
}

#[test]
fn perfectly_pumped_f72_dark_counts_are_background() {
    let cfg = ProtocolConfig {
        pump: Some(PumpModel { p_inf: 1.0, tau_pump: 1e-6 }),
        ..ProtocolConfig::f72_shelved().with_detection_time(1e-3)
    };
    let lambda = cfg.rate_background * cfg.detection_time;
    let sim = Simulator::with_defaults(cfg).unwrap();
    for schedule in [Schedule::Interleave, Schedule::Blocks(100)] {
        let counts: Vec<f64> = sim
            .run_batch_map(50_000, 0, schedule, 21, |s| {
                assert!(!s.ever_bright());
                s.total() as f64
            });
        assert_poisson(&counts, lambda);
    }
}

#[test]
fn tags_are_sorted_inside_the_window_and_bins_conserve_counts() {
    let cfg = ProtocolConfig::d52_shelved().with_detection_time(0.3e-3);
    let sim = Simulator::with_defaults(cfg).unwrap();
    let data = sim.run_batch(500, 500, Schedule::Blocks(50), 2);
    for s in &data.trials {
        assert!(s.tags.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.tags.iter().all(|&t| (0.0..0.3e-3).contains(&t)));
        assert_eq!(s.trajectory[0].0, 0.0);
        for k in [1, 3, 5, 7] {
            let bins = s.bin_counts(k);
            assert_eq!(bins.len(), k);
            assert_eq!(bins.iter().sum::<u32>() as usize, s.total());
        }
    }
}

#[test]
fn batches_are_reproducible_across_thread_counts() {
    let sim = Simulator::with_defaults(ProtocolConfig::standard()).unwrap();
    let run = |threads| with_threads(threads, || sim.run_batch(2_000, 2_000, Schedule::Interleave, 99)).unwrap();
    let one = run(1);
    assert_eq!(one, run(4));
    assert_ne!(one, sim.run_batch(2_000, 2_000, Schedule::Interleave, 100));
}
