//! Time-resolved maximum-likelihood discrimination from subbin counts.
//!
//! Under each hypothesis the ion may make at most one transition to the other
//! state during the window. The likelihood sums over the subbin `j` in which
//! that transition happens (`j = k`: it does not happen), with the rate in the
//! transition subbin approximated by the mean of the two rates.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::atomic::{AtomicConstants, Term};
use crate::mc::{ProtocolConfig, ProtocolKind};
use crate::{Error, Label, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubbinModel {
    pub k: usize,
    /// Subbin duration Δ (s).
    pub subbin_duration: f64,
    /// Expected counts per subbin while scattering (signal + background).
    pub lambda_bright: f64,
    /// Expected counts per subbin while dark (background).
    pub lambda_dark: f64,
    /// Bright → dark transition time; `None` disables the bright leak.
    pub tau_bright: Option<f64>,
    /// Dark → bright transition time; `None` disables the dark leak.
    pub tau_dark: Option<f64>,
    pub prior_bright: f64,
    /// Whether the dark hypothesis includes its leak term.
    #[serde(default = "yes")]
    pub dark_leak: bool,
}

fn yes() -> bool {
    true
}

impl SubbinModel {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("subbin count must be ≥ 1"));
        }
        if !(self.subbin_duration > 0.0) {
            return Err(Error::domain("subbin duration must be > 0"));
        }
        if !(self.lambda_bright >= 0.0 && self.lambda_dark >= 0.0) {
            return Err(Error::domain("subbin rates must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.prior_bright) {
            return Err(Error::domain("prior must lie in [0, 1]"));
        }
        for tau in [self.tau_bright, self.tau_dark].into_iter().flatten() {
            if !(tau > 0.0) {
                return Err(Error::domain("leak times must be > 0"));
            }
        }
        Ok(())
    }

    /// Model matching a simulated protocol over a window of `window` seconds
    /// split into `k` subbins.
    ///
    /// For D₅/₂ shelving the dark leak time is the lifetime divided by the
    /// branching back to S₁/₂, i.e. the mean time to return to the
    /// scattering manifold.
    pub fn from_protocol(
        cfg: &ProtocolConfig,
        atomic: &AtomicConstants,
        window: f64,
        k: usize,
    ) -> Result<Self> {
        let dt = window / k as f64;
        let (tau_bright, tau_dark) = match cfg.kind {
            ProtocolKind::Standard => (cfg.tau_bright, cfg.tau_dark),
            ProtocolKind::D52Shelved => {
                let level = cfg
                    .shelf_level
                    .ok_or_else(|| Error::config("d52_shelved requires shelf_level"))?;
                let ch = atomic
                    .decay_channels(level)?
                    .ok_or_else(|| Error::config("shelf level does not decay"))?;
                let back = ch.branch_to(Term::S12);
                (None, (back > 0.0).then(|| ch.lifetime / back))
            }
            ProtocolKind::F72Shelved => (None, None),
        };
        let model = SubbinModel {
            k,
            subbin_duration: dt,
            lambda_bright: (cfg.rate_bright + cfg.rate_background) * dt,
            lambda_dark: cfg.rate_background * dt,
            tau_bright,
            tau_dark,
            prior_bright: 0.5,
            dark_leak: true,
        };
        model.validate()?;
        Ok(model)
    }

    /// Probability that the transition happens in subbin `j` (`j == k`: never).
    pub fn transition_weight(&self, tau: Option<f64>, j: usize) -> f64 {
        let Some(tau) = tau else {
            return if j == self.k { 1.0 } else { 0.0 };
        };
        let s = |i: usize| (-(i as f64) * self.subbin_duration / tau).exp();
        if j < self.k {
            s(j) - s(j + 1)
        } else {
            s(self.k)
        }
    }

    /// Natural log of P(counts | hypothesis).
    pub fn log_likelihood(&self, counts: &[u32], hypothesis: Label) -> f64 {
        let (before, after, tau) = match hypothesis {
            Label::Bright => (self.lambda_bright, self.lambda_dark, self.tau_bright),
            Label::Dark => (
                self.lambda_dark,
                self.lambda_bright,
                if self.dark_leak { self.tau_dark } else { None },
            ),
        };
        let mid = 0.5 * (before + after);
        let ln_fact: f64 = counts.iter().map(|&n| ln_gamma(n as f64 + 1.0)).sum();
        // Running sums of Σ n_i ln λ − λ for the before/after segments.
        let term = |n: u32, lam: f64| log_poisson_kernel(n, lam);
        let mut suffix_after = vec![0.0; self.k + 1];
        for i in (0..self.k).rev() {
            suffix_after[i] = suffix_after[i + 1] + term(counts[i], after);
        }
        let mut prefix_before = 0.0;
        let mut terms = Vec::with_capacity(self.k + 1);
        for j in 0..=self.k {
            let w = self.transition_weight(tau, j);
            if w > 0.0 {
                let body = if j < self.k {
                    prefix_before + term(counts[j], mid) + suffix_after[j + 1]
                } else {
                    prefix_before
                };
                terms.push(w.ln() + body);
            }
            if j < self.k {
                prefix_before += term(counts[j], before);
            }
        }
        log_sum_exp(&terms) - ln_fact
    }

    /// Log posterior odds of bright over dark.
    pub fn log_likelihood_ratio(&self, counts: &[u32]) -> f64 {
        let prior = if self.prior_bright <= 0.0 {
            f64::NEG_INFINITY
        } else if self.prior_bright >= 1.0 {
            f64::INFINITY
        } else {
            (self.prior_bright / (1.0 - self.prior_bright)).ln()
        };
        self.log_likelihood(counts, Label::Bright) - self.log_likelihood(counts, Label::Dark) + prior
    }

    /// Classifies a vector of `k` subbin counts.
    pub fn classify_counts(&self, counts: &[u32]) -> Result<(Label, f64)> {
        if counts.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: counts.len() });
        }
        let llr = self.log_likelihood_ratio(counts);
        let label = if llr > 0.0 { Label::Bright } else { Label::Dark };
        Ok((label, llr))
    }
}

/// `n ln λ − λ` with the `λ = 0` limit handled.
fn log_poisson_kernel(n: u32, lambda: f64) -> f64 {
    if n == 0 {
        -lambda
    } else if lambda == 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * lambda.ln() - lambda
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Classifies raw integer counts; negative entries are rejected.
pub fn classify_subbin(model: &SubbinModel, counts: &[i64]) -> Result<(Label, f64)> {
    let counts = counts
        .iter()
        .map(|&c| u32::try_from(c).map_err(|_| Error::domain(format!("invalid count {c}"))))
        .collect::<Result<Vec<u32>>>()?;
    model.classify_counts(&counts)
}
