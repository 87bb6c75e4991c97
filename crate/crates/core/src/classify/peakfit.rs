//! Multi-Gaussian line-shape fitting on a shared constant offset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lm::{self, LmOptions, Problem};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    /// Standard deviation σ of the Gaussian.
    pub width: f64,
    pub amplitude: f64,
    pub center_err: f64,
    pub width_err: f64,
    pub amplitude_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFitResult {
    /// Peaks sorted by center.
    pub peaks: Vec<Peak>,
    pub offset: f64,
    pub offset_err: f64,
    /// Residual norm in the units of `y`.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Residual norm (normalized units) after each accepted step.
    pub history: Vec<f64>,
}

/// Model in normalized coordinates: p = [offset, (center, σ, amplitude)…].
struct Gaussians<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl Gaussians<'_> {
    fn eval(p: &[f64], x: f64) -> f64 {
        p[0] + p[1..]
            .chunks_exact(3)
            .map(|q| q[2] * (-0.5 * ((x - q[0]) / q[1]).powi(2)).exp())
            .sum::<f64>()
    }
}

impl Problem for Gaussians<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| Self::eval(p, x) - y),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.x.len(), p.len());
        for (i, &x) in self.x.iter().enumerate() {
            j[(i, 0)] = 1.0;
            for (k, q) in p[1..].chunks_exact(3).enumerate() {
                let u = (x - q[0]) / q[1];
                let g = (-0.5 * u * u).exp();
                j[(i, 1 + 3 * k)] = q[2] * g * u / q[1];
                j[(i, 2 + 3 * k)] = q[2] * g * u * u / q[1];
                j[(i, 3 + 3 * k)] = g;
            }
        }
        j
    }
}

fn flat_failure(reason: &str, y: &[f64]) -> Error {
    Error::FitFailure {
        iterations: 0,
        residual: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        reason: reason.into(),
    }
}

/// Centred moving average over `2h + 1` points (shrinking at the edges).
fn smooth(y: &[f64], h: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let w = &y[i.saturating_sub(h)..(i + h + 1).min(y.len())];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Index span around `i` where `y` stays above half of its height over `base`.
fn half_max_span(y: &[f64], i: usize, base: f64) -> (usize, usize) {
    let half = base + 0.5 * (y[i] - base);
    let mut lo = i;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < y.len() && y[hi] > half {
        hi += 1;
    }
    (lo, hi)
}

/// Up to `n` local maxima, highest first; a maximum inside the half-maximum
/// span of an already chosen one is skipped.
fn local_maxima(y: &[f64], n: usize) -> Vec<usize> {
    let len = y.len();
    let mut cand: Vec<usize> = (0..len)
        .filter(|&i| {
            let left = i == 0 || y[i] > y[i - 1];
            let right = i + 1 == len || y[i] >= y[i + 1];
            left && right
        })
        .collect();
    cand.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let base = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut chosen: Vec<(usize, (usize, usize))> = Vec::new();
    for i in cand {
        if chosen.len() == n {
            break;
        }
        if chosen.iter().all(|(_, (lo, hi))| i < *lo || i > *hi) {
            chosen.push((i, half_max_span(y, i, base)));
        }
    }
    chosen.into_iter().map(|(i, _)| i).collect()
}

/// σ guess from the half-maximum crossing nearest the peak.
fn width_guess(x: &[f64], y: &[f64], i: usize, base: f64, fallback: f64) -> f64 {
    let (lo, hi) = half_max_span(y, i, base);
    let hwhm = (x[hi] - x[i]).min(x[i] - x[lo]);
    let hwhm = if hwhm > 0.0 { hwhm } else { (x[hi] - x[lo]) / 2.0 };
    if hwhm > 0.0 {
        hwhm / (2.0 * std::f64::consts::LN_2).sqrt()
    } else {
        fallback
    }
}

/// Fits `n_peaks` Gaussians plus a constant offset to `(x, y)`.
///
/// Coordinates are centred and scaled to unit range before fitting, so
/// absolute optical frequencies can be passed directly.
pub fn gaussian_peak_fit(x: &[f64], y: &[f64], n_peaks: usize) -> Result<PeakFitResult> {
    gaussian_peak_fit_with(x, y, n_peaks, &LmOptions::default())
}

pub fn gaussian_peak_fit_with(
    x: &[f64],
    y: &[f64],
    n_peaks: usize,
    opts: &LmOptions,
) -> Result<PeakFitResult> {
    if n_peaks == 0 {
        return Err(Error::domain("need at least one peak"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 4 * n_peaks {
        return Err(Error::domain(format!(
            "{} points are too few for {n_peaks} peaks",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite input"));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("x must be strictly increasing"));
    }
    let x0 = 0.5 * (x[0] + x[x.len() - 1]);
    let xs = x[x.len() - 1] - x[0];
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ys = y_max - y_min;
    if !(ys > 0.0) {
        return Err(flat_failure("flat data: no peak to fit", y));
    }
    let xn: Vec<f64> = x.iter().map(|v| (v - x0) / xs).collect();
    let yn: Vec<f64> = y.iter().map(|v| (v - y_min) / ys).collect();

    // Light smoothing keeps single noisy samples from seeding peaks.
    let ys_smooth = smooth(&yn, (x.len() / 100).max(1));
    let base = ys_smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let maxima = local_maxima(&ys_smooth, n_peaks);
    if maxima.len() < n_peaks {
        return Err(flat_failure("fewer local maxima than requested peaks", y));
    }
    let fallback = 1.0 / (10.0 * n_peaks as f64);
    let mut p0 = vec![base];
    for &i in &maxima {
        p0.extend([xn[i], width_guess(&xn, &ys_smooth, i, base, fallback), ys_smooth[i] - base]);
    }

    let problem = Gaussians { x: &xn, y: &yn };
    let fit = lm::minimize(&problem, &p0, opts)?;
    if fit.params.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure {
            iterations: fit.iterations,
            residual: fit.residual_norm * ys,
            reason: "non-finite parameters".into(),
        });
    }
    let se = fit.standard_errors().unwrap_or_else(|| vec![f64::NAN; fit.params.len()]);
    let mut peaks: Vec<Peak> = fit.params[1..]
        .chunks_exact(3)
        .zip(se[1..].chunks_exact(3))
        .map(|(q, e)| Peak {
            center: x0 + q[0] * xs,
            width: q[1].abs() * xs,
            amplitude: q[2] * ys,
            center_err: e[0] * xs,
            width_err: e[1] * xs,
            amplitude_err: e[2] * ys,
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(PeakFitResult {
        peaks,
        offset: y_min + fit.params[0] * ys,
        offset_err: se[0] * ys,
        residual_norm: fit.residual_norm * ys,
        iterations: fit.iterations,
        history: fit.history,
    })
}
