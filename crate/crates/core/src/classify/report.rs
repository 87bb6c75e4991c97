//! Detection-error summaries with binomial confidence intervals.

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Fraction of dark-prepared trials read as bright.
    pub eps_dark: f64,
    /// Fraction of bright-prepared trials read as dark.
    pub eps_bright: f64,
    pub eps: f64,
    pub n_dark: usize,
    pub n_bright: usize,
    pub errors_dark: usize,
    pub errors_bright: usize,
    pub ci_dark: (f64, f64),
    pub ci_bright: (f64, f64),
    pub ci: (f64, f64),
}

impl ErrorReport {
    pub fn from_counts(
        errors_dark: usize,
        n_dark: usize,
        errors_bright: usize,
        n_bright: usize,
    ) -> Result<Self> {
        if n_dark == 0 || n_bright == 0 {
            return Err(Error::MissingClass);
        }
        if errors_dark > n_dark || errors_bright > n_bright {
            return Err(Error::domain("more errors than trials"));
        }
        let eps_dark = errors_dark as f64 / n_dark as f64;
        let eps_bright = errors_bright as f64 / n_bright as f64;
        let eps = (eps_dark + eps_bright) / 2.0;
        let ci_dark = wilson_interval(errors_dark, n_dark, Z95);
        let ci_bright = wilson_interval(errors_bright, n_bright, Z95);
        let half = 0.5 * (half_width(ci_dark).powi(2) + half_width(ci_bright).powi(2)).sqrt();
        let ci = ((eps - half).max(0.0), (eps + half).min(1.0));
        Ok(ErrorReport {
            eps_dark,
            eps_bright,
            eps,
            n_dark,
            n_bright,
            errors_dark,
            errors_bright,
            ci_dark,
            ci_bright,
            ci,
        })
    }

    /// Half-width of the combined ε interval before clipping.
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (half_width(self.ci_dark).powi(2) + half_width(self.ci_bright).powi(2)).sqrt()
    }

    /// Binomial standard error of ε from the per-class errors.
    pub fn sigma(&self) -> f64 {
        0.5 * (qpn_sigma(self.eps_dark, self.n_dark).powi(2)
            + qpn_sigma(self.eps_bright, self.n_bright).powi(2))
        .sqrt()
    }

    pub const CSV_HEADER: &'static str =
        "eps_dark,eps_bright,eps,n_dark,n_bright,ci_dark_lo,ci_dark_hi,ci_bright_lo,ci_bright_hi,ci_lo,ci_hi";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.eps_dark,
            self.eps_bright,
            self.eps,
            self.n_dark,
            self.n_bright,
            self.ci_dark.0,
            self.ci_dark.1,
            self.ci_bright.0,
            self.ci_bright.1,
            self.ci.0,
            self.ci.1
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn half_width(ci: (f64, f64)) -> f64 {
    0.5 * (ci.1 - ci.0)
}

/// Builds a report from predicted and true labels.
pub fn error_report(predictions: &[Label], labels: &[Label]) -> Result<ErrorReport> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: predictions.len() });
    }
    let (mut nd, mut nb, mut ed, mut eb) = (0, 0, 0, 0);
    for (p, t) in predictions.iter().zip(labels) {
        match t {
            Label::Dark => {
                nd += 1;
                ed += usize::from(*p != *t);
            }
            Label::Bright => {
                nb += 1;
                eb += usize::from(*p != *t);
            }
        }
    }
    ErrorReport::from_counts(ed, nd, eb, nb)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Quantum projection noise σ = √(p(1−p)/N).
pub fn qpn_sigma(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}
