//! Population transfer into the metastable shelves.
//!
//! Three models are provided: a train of π pulses with independent per-pulse
//! efficiencies, rapid adiabatic passage (Landau-Zener with Markovian
//! dephasing), and single-exponential incoherent pumping into F₇/₂.
//!
//! Frequencies Ω and Γ are ordinary frequencies (Hz) and the sweep rate α is
//! in Hz/s, so the Landau-Zener exponent π²Ω²/α is dimensionless.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// Per-pulse transfer fractions of a shelving pulse train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PulseSequence {
    efficiencies: Vec<f64>,
}

impl PulseSequence {
    pub fn new(efficiencies: Vec<f64>) -> Result<Self> {
        if efficiencies.is_empty() {
            return Err(Error::domain("pulse sequence must contain at least one pulse"));
        }
        if let Some(f) = efficiencies.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::domain(format!("pulse efficiency {f} outside [0, 1]")));
        }
        Ok(PulseSequence { efficiencies })
    }

    /// A train whose first pulse leaves `first_residual` behind and whose
    /// remaining `pulses - 1` identical pulses bring the residual down to
    /// `final_residual`.
    pub fn calibrated(first_residual: f64, final_residual: f64, pulses: usize) -> Result<Self> {
        if pulses == 0 {
            return Err(Error::domain("need at least one pulse"));
        }
        if !(0.0 < first_residual && first_residual <= 1.0)
            || !(0.0 < final_residual && final_residual <= first_residual)
        {
            return Err(Error::domain(format!(
                "residuals must satisfy 0 < final ({final_residual}) ≤ first ({first_residual}) ≤ 1"
            )));
        }
        let mut eff = vec![1.0 - first_residual];
        if pulses > 1 {
            let per_pulse = (final_residual / first_residual).powf(1.0 / (pulses - 1) as f64);
            eff.extend(std::iter::repeat_n(1.0 - per_pulse, pulses - 1));
        }
        PulseSequence::new(eff)
    }

    /// Three pulses (Δm_F = 0, ±2) on S₁/₂|1⟩ → D₅/₂|3⟩: 93.9 % → 98.4 %.
    pub fn d52_f3_three_pulse() -> Self {
        PulseSequence::calibrated(0.061, 0.016, 3).expect("valid preset")
    }

    /// Five pulses (Δm_F = 0, ±1, ±2) on S₁/₂|0⟩ → D₅/₂|2⟩: 97.9 % → 99.3 %.
    pub fn d52_f2_five_pulse() -> Self {
        PulseSequence::calibrated(0.021, 0.007, 5).expect("valid preset")
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn push(&mut self, efficiency: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::domain(format!("pulse efficiency {efficiency} outside [0, 1]")));
        }
        self.efficiencies.push(efficiency);
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for PulseSequence {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PulseSequence::new(v)
    }
}

impl From<PulseSequence> for Vec<f64> {
    fn from(s: PulseSequence) -> Self {
        s.efficiencies
    }
}

/// Residual population left in the source manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTrajectory {
    pub residual: f64,
    /// Residual after each pulse, in order.
    pub trajectory: Vec<f64>,
}

pub fn sequence_residual(seq: &PulseSequence) -> ResidualTrajectory {
    let trajectory: Vec<f64> = seq
        .efficiencies
        .iter()
        .scan(1.0, |left, f| {
            *left *= 1.0 - f;
            Some(*left)
        })
        .collect();
    ResidualTrajectory {
        residual: *trajectory.last().expect("nonempty sequence"),
        trajectory,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RapParams {
    /// Rabi frequency Ω (Hz).
    pub rabi: f64,
    /// Inverse laser coherence time Γ (Hz).
    pub gamma: f64,
    /// Frequency sweep rate α (Hz/s).
    pub sweep_rate: f64,
}

impl RapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rabi > 0.0) || !self.rabi.is_finite() {
            return Err(Error::domain(format!("Rabi frequency must be > 0, got {}", self.rabi)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::domain(format!("Γ must be ≥ 0, got {}", self.gamma)));
        }
        if !(self.sweep_rate > 0.0) {
            return Err(Error::domain(format!("sweep rate must be > 0, got {}", self.sweep_rate)));
        }
        Ok(())
    }
}

/// P as a function of the adiabaticity x = π²Ω²/α and the ratio r = Γ/Ω.
fn rap_in_reduced_units(x: f64, r: f64) -> f64 {
    let damp = (-2.0 * r * x).exp();
    let lz = -(-x).exp_m1();
    0.5 * (1.0 - damp) + damp * lz
}

/// Transfer probability of a Landau-Zener sweep under dephasing:
/// `½(1 − e^{−2π²ΓΩ/α}) + e^{−2π²ΓΩ/α}(1 − e^{−π²Ω²/α})`.
pub fn rap_probability(p: &RapParams) -> Result<f64> {
    p.validate()?;
    let x = PI * PI * p.rabi * p.rabi / p.sweep_rate;
    Ok(rap_in_reduced_units(x, p.gamma / p.rabi).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RapOptimum {
    /// Optimal sweep rate α* (Hz/s); `None` when the optimum is only
    /// approached as α → 0.
    pub sweep_rate: Option<f64>,
    pub probability: f64,
    /// Set when `probability` is a supremum that no finite α attains.
    pub supremum: bool,
}

/// Maximizes [`rap_probability`] over the sweep rate by golden-section
/// search in ln α.
pub fn rap_max_transfer(rabi: f64, gamma: f64) -> Result<RapOptimum> {
    if !(rabi > 0.0) || !rabi.is_finite() {
        return Err(Error::domain(format!("Rabi frequency must be > 0, got {rabi}")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("Γ must be ≥ 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(RapOptimum { sweep_rate: None, probability: 1.0, supremum: true });
    }
    let eval = |ln_alpha: f64| {
        rap_probability(&RapParams { rabi, gamma, sweep_rate: ln_alpha.exp() }).unwrap_or(0.0)
    };
    // The optimum adiabaticity x* lies in (ln 2, ∞); this bracket covers
    // Γ/Ω down to ~e^-100. For strong dephasing P rounds to exactly ½ over
    // most of the bracket, so a coarse scan picks the sub-bracket first.
    let scale = (PI * PI * rabi * rabi).ln();
    let (a, b) = (scale - 100f64.ln(), scale - 1e-4f64.ln());
    const GRID: usize = 256;
    let step = (b - a) / GRID as f64;
    let best_node = (0..=GRID)
        .map(|i| (i, eval(a + i as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let lo = a + best_node.saturating_sub(1) as f64 * step;
    let hi = a + (best_node + 1).min(GRID) as f64 * step;
    let (lo, hi) = golden_section_max(eval, lo, hi, 1e-12);
    let best = 0.5 * (lo + hi);
    Ok(RapOptimum {
        sweep_rate: Some(best.exp()),
        probability: eval(best),
        supremum: false,
    })
}

/// Golden-section search for the maximum of a unimodal function; returns the
/// final bracket.
fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a, b)
}

/// Γ = 1/T_coh. An infinite coherence time gives Γ = 0.
pub fn coherence_to_gamma(coherence_time: f64) -> Result<f64> {
    if !(coherence_time > 0.0) {
        return Err(Error::domain(format!(
            "coherence time must be > 0, got {coherence_time}"
        )));
    }
    Ok(1.0 / coherence_time)
}

/// Phenomenological incoherent pump into F₇/₂: `P(t) = p_∞ (1 − e^{−t/τ})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpModel {
    pub p_inf: f64,
    /// Pump time constant (s).
    pub tau_pump: f64,
}

impl Default for PumpModel {
    /// Calibrated so that 100 ms of pumping transfers 99.9 %.
    fn default() -> Self {
        PumpModel { p_inf: 1.0, tau_pump: 0.1 / 1000f64.ln() }
    }
}

impl PumpModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_inf) {
            return Err(Error::domain(format!("p_inf {} outside [0, 1]", self.p_inf)));
        }
        if !(self.tau_pump > 0.0) {
            return Err(Error::domain(format!("pump time constant must be > 0, got {}", self.tau_pump)));
        }
        Ok(())
    }
}

pub fn incoherent_pump_probability(t: f64, m: &PumpModel) -> f64 {
    debug_assert!(t >= 0.0);
    -m.p_inf * (-t.max(0.0) / m.tau_pump).exp_m1()
}
