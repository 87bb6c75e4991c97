//! Independent oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use shelving_core::classify::SubbinModel;
use shelving_core::Label;

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn ln_poisson(n: u32, mu: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mu.ln() - mu - ln_factorial(n)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact single-transition likelihood with the transition time integrated on
/// a 1 µs midpoint grid instead of the per-subbin midpoint rate.
pub fn grid_log_likelihood(m: &SubbinModel, counts: &[u32], h: Label) -> f64 {
    let dt = m.subbin_duration;
    let (before, after, tau) = match h {
        Label::Bright => (m.lambda_bright / dt, m.lambda_dark / dt, m.tau_bright),
        Label::Dark => (m.lambda_dark / dt, m.lambda_bright / dt, m.tau_dark),
    };
    let window = dt * m.k as f64;
    let stay: f64 = counts.iter().map(|&n| ln_poisson(n, before * dt)).sum();
    let Some(tau) = tau else { return stay };
    let step = 1e-6;
    let steps = (window / step).round() as usize;
    let mut terms = vec![-window / tau + stay];
    for i in 0..steps {
        let s = (i as f64 + 0.5) * step;
        let body: f64 = counts
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let (a, b) = (j as f64 * dt, (j + 1) as f64 * dt);
                let t_before = (s.clamp(a, b)) - a;
                ln_poisson(n, before * t_before + after * (dt - t_before))
            })
            .sum();
        terms.push((step / tau).ln() - s / tau + body);
    }
    log_sum_exp(&terms)
}

pub fn oracle_label(m: &SubbinModel, counts: &[u32]) -> Label {
    let llr = grid_log_likelihood(m, counts, Label::Bright) - grid_log_likelihood(m, counts, Label::Dark);
    if llr > 0.0 { Label::Bright } else { Label::Dark }
}

/// Calls `f` on every vector in `{0..=max}^k`.
pub fn for_each_vector(k: usize, max: u32, f: &mut impl FnMut(&[u32])) {
    let mut v = vec![0u32; k];
    loop {
        f(&v);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            v[i] += 1;
            if v[i] <= max {
                break;
            }
            v[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustive oracle: every data value (and −∞) as a cut, "bright iff > cut".
pub fn brute_force_error(values: &[f64], labels: &[Label]) -> f64 {
    let n_d = labels.iter().filter(|l| !l.is_bright()).count() as f64;
    let n_b = labels.len() as f64 - n_d;
    std::iter::once(f64::NEG_INFINITY)
        .chain(values.iter().copied())
        .map(|c| {
            let fd = values.iter().zip(labels).filter(|(v, l)| !l.is_bright() && **v > c).count() as f64;
            let fb = values.iter().zip(labels).filter(|(v, l)| l.is_bright() && **v <= c).count() as f64;
            (fd / n_d + fb / n_b) / 2.0
        })
        .fold(f64::INFINITY, f64::min)
}

