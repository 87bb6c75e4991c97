//! Measured atomic parameters of ¹⁷¹Yb⁺ relevant to shelved detection,
//! Zeeman-shifted transition frequencies and stochastic decay sampling.
//!
//! All quantities are stored in SI units: frequencies in Hz, linear Zeeman
//! coefficients in Hz/µT per unit m_F, quadratic coefficients in Hz/µT²,
//! lifetimes in seconds. Branching fractions are dimensionless.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Fine-structure term of a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    /// ²S₁/₂ ground manifold (qubit).
    S12,
    /// ²P₁/₂ cooling/detection excited state.
    P12,
    /// ²D₃/₂
    D32,
    /// ²D₅/₂ metastable shelf.
    D52,
    /// ²F₇/₂ long-lived shelf.
    F72,
    /// ¹[3/2]₃/₂ excited state of the 760 nm repump.
    B1D32,
}

impl Term {
    /// Hyperfine quantum numbers allowed for nuclear spin ½.
    pub fn allowed_f(self) -> [i32; 2] {
        match self {
            Term::S12 | Term::P12 => [0, 1],
            Term::D32 | Term::B1D32 => [1, 2],
            Term::D52 => [2, 3],
            Term::F72 => [3, 4],
        }
    }
}

/// A hyperfine Zeeman sublevel `|F, m_F⟩` of a fine-structure term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level {
    pub term: Term,
    pub f: i32,
    pub mf: i32,
}

impl Level {
    pub fn new(term: Term, f: i32, mf: i32) -> Result<Self> {
        let level = Level { term, f, mf };
        level.validate()?;
        Ok(level)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.term.allowed_f().contains(&self.f) {
            return Err(Error::domain(format!(
                "F={} is not a hyperfine level of {:?}",
                self.f, self.term
            )));
        }
        if self.mf.abs() > self.f {
            return Err(Error::domain(format!(
                "m_F={} outside ±F for F={}",
                self.mf, self.f
            )));
        }
        Ok(())
    }

    pub const fn s12(f: i32, mf: i32) -> Self {
        Level { term: Term::S12, f, mf }
    }

    pub const fn d52(f: i32, mf: i32) -> Self {
        Level { term: Term::D52, f, mf }
    }

    pub const fn f72(f: i32, mf: i32) -> Self {
        Level { term: Term::F72, f, mf }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}|{},{}⟩", self.term, self.f, self.mf)
    }
}

/// A measured value with its 1σ uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

const fn m(value: f64, sigma: f64) -> Measured {
    Measured { value, sigma }
}

/// Table of measured parameters. Keys follow the measured quantities so a
/// JSON override can replace any subset of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomicConstants {
    /// 411 nm line S₁/₂|0,0⟩ ↔ D₅/₂|2,0⟩ (Hz).
    pub freq_411_s0_d2: Measured,
    /// 411 nm line S₁/₂|1,0⟩ ↔ D₅/₂|3,0⟩ (Hz).
    pub freq_411_s1_d3: Measured,
    /// D₅/₂ magnetic-dipole hyperfine constant (Hz).
    pub hyperfine_a_d52: Measured,
    pub zeeman_s12_f1: Measured,
    pub zeeman_d52_f3: Measured,
    pub zeeman_d52_f2: Measured,
    /// Quadratic coefficient of D₅/₂|3,0⟩ (Hz/µT²).
    pub quadratic_zeeman_d52_f3_m0: Measured,
    pub lifetime_d52_f3: Measured,
    pub lifetime_d52_f2: Measured,
    pub branch_d52_f3_to_s12_f1: Measured,
    pub branch_d52_f3_to_f72: Measured,
    pub branch_d52_f2_to_s12_f0: Measured,
    pub branch_d52_f2_to_s12_f1: Measured,
    pub branch_d52_f2_to_f72: Measured,
    /// 760 nm repump center after preparing D₅/₂|3,0⟩ (Hz).
    pub freq_760_after_d3: Measured,
    /// 760 nm repump center after preparing D₅/₂|2,0⟩ (Hz).
    pub freq_760_after_d2: Measured,
}

impl Default for AtomicConstants {
    fn default() -> Self {
        AtomicConstants {
            freq_411_s0_d2: m(729.487_752e12, 177e6),
            freq_411_s1_d3: m(729.474_917e12, 177e6),
            hyperfine_a_d52: m(-63.368e6, 1e3),
            zeeman_s12_f1: m(13.98e3, 0.01e3),
            zeeman_d52_f3: m(13.96e3, 0.02e3),
            zeeman_d52_f2: m(19.61e3, 0.03e3),
            quadratic_zeeman_d52_f3_m0: m(-0.350, 0.001),
            lifetime_d52_f3: m(7.1e-3, 0.4e-3),
            lifetime_d52_f2: m(7.4e-3, 0.4e-3),
            branch_d52_f3_to_s12_f1: m(0.176, 0.004),
            branch_d52_f3_to_f72: m(0.824, 0.004),
            branch_d52_f2_to_s12_f0: m(0.111, 0.003),
            branch_d52_f2_to_s12_f1: m(0.074, 0.003),
            branch_d52_f2_to_f72: m(0.816, 0.004),
            freq_760_after_d3: m(394.430_203e12, 16e6),
            freq_760_after_d2: m(394.424_943e12, 20e6),
        }
    }
}

/// Lifetime and normalized branching of a decaying level.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayChannels {
    pub lifetime: f64,
    /// Destinations with probabilities summing to one.
    pub branches: Vec<(Level, f64)>,
}

impl DecayChannels {
    /// Total probability of decaying into any level of `term`.
    pub fn branch_to(&self, term: Term) -> f64 {
        self.branches
            .iter()
            .filter(|(l, _)| l.term == term)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DecayEvent {
        let delay = Exp::new(1.0 / self.lifetime)
            .expect("lifetime validated positive")
            .sample(rng);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut destination = self.branches[self.branches.len() - 1].0;
        for &(level, p) in &self.branches {
            acc += p;
            if u < acc {
                destination = level;
                break;
            }
        }
        DecayEvent { delay, destination }
    }
}

/// A spontaneous decay: waiting time from entry into the source level and
/// the level reached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayEvent {
    pub delay: f64,
    pub destination: Level,
}

/// Outcome of sampling a decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    Event(DecayEvent),
    /// The level is treated as non-decaying on every simulated horizon (F₇/₂).
    Never,
}

impl AtomicConstants {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: AtomicConstants = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            &self.freq_411_s0_d2,
            &self.freq_411_s1_d3,
            &self.hyperfine_a_d52,
            &self.zeeman_s12_f1,
            &self.zeeman_d52_f3,
            &self.zeeman_d52_f2,
            &self.quadratic_zeeman_d52_f3_m0,
            &self.lifetime_d52_f3,
            &self.lifetime_d52_f2,
            &self.branch_d52_f3_to_s12_f1,
            &self.branch_d52_f3_to_f72,
            &self.branch_d52_f2_to_s12_f0,
            &self.branch_d52_f2_to_s12_f1,
            &self.branch_d52_f2_to_f72,
            &self.freq_760_after_d3,
            &self.freq_760_after_d2,
        ];
        if all.iter().any(|q| !q.value.is_finite() || !(q.sigma >= 0.0)) {
            return Err(Error::config("atomic constants must be finite with σ ≥ 0"));
        }
        if self.lifetime_d52_f3.value <= 0.0 || self.lifetime_d52_f2.value <= 0.0 {
            return Err(Error::config("lifetimes must be positive"));
        }
        let branches = [
            &self.branch_d52_f3_to_s12_f1,
            &self.branch_d52_f3_to_f72,
            &self.branch_d52_f2_to_s12_f0,
            &self.branch_d52_f2_to_s12_f1,
            &self.branch_d52_f2_to_f72,
        ];
        if branches.iter().any(|b| b.value < 0.0) {
            return Err(Error::config("branching fractions must be nonnegative"));
        }
        Ok(())
    }

    /// Linear Zeeman coefficient (Hz/µT per unit m_F) of the manifold
    /// containing `level`; zero where none is tabulated.
    pub fn linear_zeeman(&self, level: Level) -> f64 {
        match (level.term, level.f) {
            (Term::S12, 1) => self.zeeman_s12_f1.value,
            (Term::D52, 3) => self.zeeman_d52_f3.value,
            (Term::D52, 2) => self.zeeman_d52_f2.value,
            _ => 0.0,
        }
    }

    /// Zeeman shift of a single level at field `b_ut` (µT).
    pub fn zeeman_shift(&self, level: Level, b_ut: f64) -> f64 {
        let linear = self.linear_zeeman(level) * level.mf as f64 * b_ut;
        let quadratic = if level == Level::d52(3, 0) {
            self.quadratic_zeeman_d52_f3_m0.value * b_ut * b_ut
        } else {
            0.0
        };
        linear + quadratic
    }

    /// Shift of the `from → to` transition relative to its line center.
    /// Swapping the arguments negates the result.
    pub fn differential_shift(&self, from: Level, to: Level, b_ut: f64) -> f64 {
        self.zeeman_shift(to, b_ut) - self.zeeman_shift(from, b_ut)
    }

    /// Zero-field line center of a tabulated `lower → upper` pair, and
    /// whether Zeeman shifts are modeled on it.
    fn line_center(&self, lower: Level, upper: Level) -> Result<(f64, bool)> {
        match (lower.term, lower.f, upper.term, upper.f) {
            (Term::S12, 0, Term::D52, 2) => Ok((self.freq_411_s0_d2.value, true)),
            (Term::S12, 1, Term::D52, 3) => Ok((self.freq_411_s1_d3.value, true)),
            // Repump lines: only the centers are stored.
            (Term::F72, 3, Term::B1D32, _) => Ok((self.freq_760_after_d2.value, false)),
            (Term::F72, 4, Term::B1D32, _) => Ok((self.freq_760_after_d3.value, false)),
            _ => Err(Error::UnsupportedTransition(format!("{lower} → {upper}"))),
        }
    }

    /// Frequency (Hz) of `lower → upper` at magnetic field `b_ut` (µT).
    pub fn transition_frequency(&self, lower: Level, upper: Level, b_ut: f64) -> Result<f64> {
        lower.validate()?;
        upper.validate()?;
        if !(b_ut >= 0.0) || !b_ut.is_finite() {
            return Err(Error::domain(format!("magnetic field must be ≥ 0, got {b_ut}")));
        }
        let (center, zeeman) = self.line_center(lower, upper)?;
        if !zeeman {
            return Ok(center);
        }
        // Electric-quadrupole selection rule.
        if (upper.mf - lower.mf).abs() > 2 {
            return Err(Error::UnsupportedTransition(format!(
                "{lower} → {upper} violates |Δm_F| ≤ 2"
            )));
        }
        Ok(center + self.differential_shift(lower, upper, b_ut))
    }

    /// Lifetime and normalized branching of `source`.
    ///
    /// `Ok(None)` means the level is modeled as non-decaying (F₇/₂).
    pub fn decay_channels(&self, source: Level) -> Result<Option<DecayChannels>> {
        source.validate()?;
        let (lifetime, raw) = match (source.term, source.f) {
            (Term::D52, 3) => (
                self.lifetime_d52_f3.value,
                vec![
                    (Level::s12(1, 0), self.branch_d52_f3_to_s12_f1.value),
                    (Level::f72(3, 0), self.branch_d52_f3_to_f72.value),
                ],
            ),
            (Term::D52, 2) => (
                self.lifetime_d52_f2.value,
                vec![
                    (Level::s12(0, 0), self.branch_d52_f2_to_s12_f0.value),
                    (Level::s12(1, 0), self.branch_d52_f2_to_s12_f1.value),
                    (Level::f72(3, 0), self.branch_d52_f2_to_f72.value),
                ],
            ),
            (Term::F72, _) => return Ok(None),
            _ => return Err(Error::StableState(source.to_string())),
        };
        let total: f64 = raw.iter().map(|(_, p)| p).sum();
        if !(total > 0.0) || !(lifetime > 0.0) {
            return Err(Error::config(format!("invalid decay table for {source}")));
        }
        let branches = raw.into_iter().map(|(l, p)| (l, p / total)).collect();
        Ok(Some(DecayChannels { lifetime, branches }))
    }

    pub fn sample_decay_with<R: Rng + ?Sized>(&self, source: Level, rng: &mut R) -> Result<Decay> {
        Ok(match self.decay_channels(source)? {
            Some(ch) => Decay::Event(ch.sample(rng)),
            None => Decay::Never,
        })
    }

    pub fn sample_decay(&self, source: Level, seed: u64) -> Result<Decay> {
        self.sample_decay_with(source, &mut rng::from_seed(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c() -> AtomicConstants {
        AtomicConstants::default()
    }

    #[test]
    fn clock_line_at_zero_field() {
        let f = c()
            .transition_frequency(Level::s12(0, 0), Level::d52(2, 0), 0.0)
            .unwrap();
        assert_eq!(f, 729.487752e12);
    }

    #[test]
    fn quadratic_shift_of_d3_clock_state() {
        let b = 440.9;
        let f = c()
            .transition_frequency(Level::s12(1, 0), Level::d52(3, 0), b)
            .unwrap();
        let shift = f - 729.474917e12;
        let expected = -0.350 * 440.9 * 440.9;
        // one ulp at 7e14 Hz is 0.125 Hz
        assert!((shift - expected).abs() < 0.5);
        assert!((expected / 1e3 + 68.04).abs() < 0.01);
    }

    #[test]
    fn linear_shift_uses_coefficient_times_mf() {
        let b = 10.0;
        let f = c()
            .transition_frequency(Level::s12(1, 1), Level::d52(3, 3), b)
            .unwrap();
        let expected = 729.474917e12 + 13.96e3 * 3.0 * b - 13.98e3 * 1.0 * b;
        assert!((f - expected).abs() < 0.5);
    }

    #[test]
    fn unsupported_pair_and_bad_mf() {
        assert!(matches!(
            c().transition_frequency(Level::s12(0, 0), Level::d52(3, 0), 0.0),
            Err(Error::UnsupportedTransition(_))
        ));
        assert!(matches!(
            c().transition_frequency(Level::s12(0, 0), Level { term: Term::D52, f: 2, mf: 3 }, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(Level::new(Term::D52, 4, 0).is_err());
        assert!(c()
            .transition_frequency(Level::s12(0, 0), Level::d52(2, 0), -1.0)
            .is_err());
    }

    #[test]
    fn repump_lines_return_stored_centers() {
        let up = Level { term: Term::B1D32, f: 1, mf: 0 };
        assert_eq!(
            c().transition_frequency(Level::f72(4, 0), up, 400.0).unwrap(),
            394.430203e12
        );
        assert_eq!(
            c().transition_frequency(Level::f72(3, 0), up, 0.0).unwrap(),
            394.424943e12
        );
    }

    #[test]
    fn differential_shift_is_antisymmetric() {
        let a = Level::s12(1, -1);
        let b = Level::d52(3, 2);
        for field in [0.0, 1.0, 440.9, 1000.0] {
            let x = c().differential_shift(a, b, field);
            let y = c().differential_shift(b, a, field);
            assert_eq!(x, -y);
        }
    }

    #[test]
    fn branching_normalizes() {
        for src in [Level::d52(3, 0), Level::d52(2, 0)] {
            let ch = c().decay_channels(src).unwrap().unwrap();
            let s: f64 = ch.branches.iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stable_and_non_decaying_sources() {
        assert!(matches!(
            c().sample_decay(Level::s12(1, 0), 1),
            Err(Error::StableState(_))
        ));
        for seed in 0..100 {
            assert_eq!(c().sample_decay(Level::f72(3, 0), seed).unwrap(), Decay::Never);
        }
    }

    #[test]
    fn d3_branch_frequencies_match_table() {
        let n = 1_000_000u32;
        let consts = c();
        let ch = consts.decay_channels(Level::d52(3, 0)).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let to_s = (0..n)
            .filter(|_| ch.sample(&mut rng).destination.term == Term::S12)
            .count() as f64;
        let p = 0.176;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((to_s / n as f64 - p).abs() < 3.0 * sigma, "{}", to_s / n as f64);
    }

    #[test]
    fn d2_mean_delay_is_lifetime() {
        let n = 1_000_000;
        let ch = c().decay_channels(Level::d52(2, 0)).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean = (0..n).map(|_| ch.sample(&mut rng).delay).sum::<f64>() / n as f64;
        // exponential: σ of the mean = τ/√N
        let tau = 7.4e-3;
        assert!((mean - tau).abs() < 3.0 * tau / (n as f64).sqrt());
    }

    #[test]
    fn delays_pass_ks_against_exponential() {
        let n = 100_000;
        let ch = c().decay_channels(Level::d52(3, 1)).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut d: Vec<f64> = (0..n).map(|_| ch.sample(&mut rng).delay).collect();
        d.sort_by(f64::total_cmp);
        let tau = ch.lifetime;
        let stat = d
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-x / tau).exp();
                let lo = cdf - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - cdf;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // asymptotic 1% critical value
        assert!(stat < 1.628 / (n as f64).sqrt(), "KS statistic {stat}");
    }

    #[test]
    fn json_override_replaces_subset() {
        let c = AtomicConstants::from_json(r#"{"lifetime_d52_f2": {"value": 0.007, "sigma": 0.0}}"#)
            .unwrap();
        assert_eq!(c.lifetime_d52_f2.value, 0.007);
        assert_eq!(c.lifetime_d52_f3.value, 7.1e-3);
        assert!(AtomicConstants::from_json(r#"{"lifetime_d52_f2": {"value": -1, "sigma": 0}}"#).is_err());
    }
}
