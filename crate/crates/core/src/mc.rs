//! Event-driven Monte Carlo of the photon record of a single detection window.
//!
//! The ion's hidden internal state is propagated by sampling exact waiting
//! times for every transition (leakage, metastable decay). Between transitions
//! photons arrive as a homogeneous Poisson process whose rate depends on the
//! state, so the record is an inhomogeneous Poisson process with piecewise
//! constant intensity. No time discretization is involved.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicConstants, DecayChannels, Level, Term};
use crate::rng::{self, domain};
use crate::transfer::{incoherent_pump_probability, PumpModel};
use crate::{Error, Label, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Fluorescence detection directly in the qubit manifold.
    Standard,
    /// Dark state shelved to D₅/₂ by a π-pulse train before detection.
    D52Shelved,
    /// Dark state incoherently pumped to F₇/₂ before detection.
    F72Shelved,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Standard => "standard",
            ProtocolKind::D52Shelved => "d52_shelved",
            ProtocolKind::F72Shelved => "f72_shelved",
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One simulated detection experiment. Rates are counts per second at the
/// detector, times are in seconds. A `None` leak time means no leakage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value")]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub rate_bright: f64,
    pub rate_background: f64,
    /// Bright → dark leakage time (standard protocol only).
    pub tau_bright: Option<f64>,
    /// Dark → bright leakage time (standard protocol only).
    pub tau_dark: Option<f64>,
    pub shelf_level: Option<Level>,
    /// Probability that the shelving pulse train leaves the ion in S₁/₂.
    pub shelving_error: Option<f64>,
    pub pump: Option<PumpModel>,
    /// Duration of incoherent F₇/₂ pumping (s).
    pub pump_time: Option<f64>,
    pub detection_time: f64,
    pub subbins: usize,
}

/// Calibrated default count rates (per second).
pub const DEFAULT_RATE_BRIGHT: f64 = 1.2e5;
pub const DEFAULT_RATE_BACKGROUND: f64 = 7.0e3;
/// Residual after five shelving pulses to D₅/₂|2⟩.
pub const DEFAULT_SHELVING_ERROR: f64 = 0.007;
pub const DEFAULT_PUMP_TIME: f64 = 0.2;

impl ProtocolConfig {
    pub fn standard() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Standard,
            rate_bright: DEFAULT_RATE_BRIGHT,
            rate_background: DEFAULT_RATE_BACKGROUND,
            tau_bright: Some(2e-3),
            tau_dark: Some(30e-3),
            shelf_level: None,
            shelving_error: None,
            pump: None,
            pump_time: None,
            detection_time: 250e-6,
            subbins: 5,
        }
    }

    pub fn d52_shelved() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::D52Shelved,
            tau_bright: None,
            tau_dark: None,
            shelf_level: Some(Level::d52(2, 0)),
            shelving_error: Some(DEFAULT_SHELVING_ERROR),
            ..ProtocolConfig::standard()
        }
    }

    pub fn f72_shelved() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::F72Shelved,
            tau_bright: None,
            tau_dark: None,
            pump: Some(PumpModel::default()),
            pump_time: Some(DEFAULT_PUMP_TIME),
            ..ProtocolConfig::standard()
        }
    }

    pub fn for_kind(kind: ProtocolKind) -> Self {
        match kind {
            ProtocolKind::Standard => ProtocolConfig::standard(),
            ProtocolKind::D52Shelved => ProtocolConfig::d52_shelved(),
            ProtocolKind::F72Shelved => ProtocolConfig::f72_shelved(),
        }
    }

    pub fn with_detection_time(mut self, t: f64) -> Self {
        self.detection_time = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be a finite value ≥ 0, got {v}")))
            }
        };
        nonneg("rate_bright", self.rate_bright)?;
        nonneg("rate_background", self.rate_background)?;
        if !(self.detection_time > 0.0) || !self.detection_time.is_finite() {
            return Err(Error::config(format!(
                "detection_time must be > 0, got {}",
                self.detection_time
            )));
        }
        if self.subbins == 0 {
            return Err(Error::config("subbins must be ≥ 1"));
        }
        for (name, tau) in [("tau_bright", self.tau_bright), ("tau_dark", self.tau_dark)] {
            if let Some(t) = tau {
                if !(t > 0.0) {
                    return Err(Error::config(format!("{name} must be > 0 when set, got {t}")));
                }
            }
        }
        let shelf_set = self.shelf_level.is_some() || self.shelving_error.is_some();
        let pump_set = self.pump.is_some() || self.pump_time.is_some();
        let leak_set = self.tau_bright.is_some() || self.tau_dark.is_some();
        match self.kind {
            ProtocolKind::Standard => {
                if shelf_set || pump_set {
                    return Err(Error::config(
                        "standard protocol does not take shelving or pump parameters",
                    ));
                }
            }
            ProtocolKind::D52Shelved => {
                if leak_set || pump_set {
                    return Err(Error::config(
                        "d52_shelved takes neither leak times nor pump parameters",
                    ));
                }
                let level = self
                    .shelf_level
                    .ok_or_else(|| Error::config("d52_shelved requires shelf_level"))?;
                level.validate()?;
                if level.term != Term::D52 {
                    return Err(Error::config(format!("shelf level {level} is not in D5/2")));
                }
                let err = self.shelving_error.unwrap_or(0.0);
                if !(0.0..=1.0).contains(&err) {
                    return Err(Error::config(format!("shelving_error {err} outside [0, 1]")));
                }
            }
            ProtocolKind::F72Shelved => {
                if leak_set || shelf_set {
                    return Err(Error::config(
                        "f72_shelved takes neither leak times nor D5/2 shelving parameters",
                    ));
                }
                self.pump.unwrap_or_default().validate()?;
                if let Some(t) = self.pump_time {
                    if !(t >= 0.0) {
                        return Err(Error::config(format!("pump_time must be ≥ 0, got {t}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that preparing the dark state actually leaves the ion in
    /// its non-scattering shelf.
    pub fn shelving_success(&self) -> f64 {
        match self.kind {
            ProtocolKind::Standard => 1.0,
            ProtocolKind::D52Shelved => 1.0 - self.shelving_error.unwrap_or(0.0),
            ProtocolKind::F72Shelved => incoherent_pump_probability(
                self.pump_time.unwrap_or(DEFAULT_PUMP_TIME),
                &self.pump.unwrap_or_default(),
            ),
        }
    }
}

/// Fields as they may appear in JSON; missing keys fall back to the defaults
/// of the named kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    kind: ProtocolKind,
    rate_bright: f64,
    rate_background: f64,
    tau_bright: Option<f64>,
    tau_dark: Option<f64>,
    shelf_level: Option<Level>,
    shelving_error: Option<f64>,
    pump: Option<PumpModel>,
    pump_time: Option<f64>,
    detection_time: f64,
    subbins: usize,
}

impl TryFrom<serde_json::Value> for ProtocolConfig {
    type Error = Error;

    fn try_from(value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(user) = value else {
            return Err(Error::config("protocol section must be a JSON object"));
        };
        let kind = match user.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => ProtocolKind::Standard,
        };
        let serde_json::Value::Object(mut merged) =
            serde_json::to_value(ProtocolConfig::for_kind(kind))?
        else {
            unreachable!("struct serializes to an object")
        };
        merged.extend(user);
        let raw: RawProtocol = serde_json::from_value(serde_json::Value::Object(merged))?;
        let cfg = ProtocolConfig {
            kind: raw.kind,
            rate_bright: raw.rate_bright,
            rate_background: raw.rate_background,
            tau_bright: raw.tau_bright,
            tau_dark: raw.tau_dark,
            shelf_level: raw.shelf_level,
            shelving_error: raw.shelving_error,
            pump: raw.pump,
            pump_time: raw.pump_time,
            detection_time: raw.detection_time,
            subbins: raw.subbins,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hidden internal state of the ion during detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InternalState {
    /// In the qubit manifold and scattering detection light.
    BrightScattering,
    /// In the non-scattering qubit state (standard protocol).
    DarkQubit,
    ShelvedD(Level),
    ShelvedF,
}

/// Photon arrival times of one trial together with the hidden trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeTagStream {
    /// Sorted arrival times in `[0, detection_time)`.
    pub tags: Vec<f64>,
    pub true_label: Label,
    /// State transitions `(time, new state)`, starting at `t = 0`.
    pub trajectory: Vec<(f64, InternalState)>,
    pub detection_time: f64,
}

impl TimeTagStream {
    pub fn total(&self) -> usize {
        self.tags.len()
    }

    /// Number of tags strictly before `t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.tags.partition_point(|&x| x < t)
    }

    /// Counts in `k` equal-width bins partitioning `[0, detection_time)`.
    pub fn bin_counts(&self, k: usize) -> Vec<u32> {
        bin_counts(self, k)
    }

    /// Counts in `k` equal bins of the truncated window `[0, window)`.
    pub fn bin_counts_until(&self, window: f64, k: usize) -> Vec<u32> {
        let mut out = vec![0u32; k.max(1)];
        self.bin_into(window, &mut out);
        out
    }

    fn bin_into(&self, window: f64, out: &mut [u32]) {
        let k = out.len();
        out.iter_mut().for_each(|c| *c = 0);
        let end = self.count_before(window);
        for &tag in &self.tags[..end] {
            let idx = ((tag / window) * k as f64) as usize;
            out[idx.min(k - 1)] += 1;
        }
    }

    /// Whether the ion was ever in the scattering state during the window.
    pub fn ever_bright(&self) -> bool {
        self.trajectory
            .iter()
            .any(|(_, s)| *s == InternalState::BrightScattering)
    }

    /// Whether the ion stayed in its initial state for the whole window.
    pub fn undisturbed(&self) -> bool {
        self.trajectory.len() == 1
    }
}

/// Counts in `k ≥ 1` equal-width bins over the stream's detection window.
pub fn bin_counts(s: &TimeTagStream, k: usize) -> Vec<u32> {
    s.bin_counts_until(s.detection_time, k)
}

/// Order in which dark and bright preparations are run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Alternate dark, bright, dark, … while both remain.
    Interleave,
    /// Alternate blocks of `m` dark then `m` bright trials. For the F₇/₂
    /// protocol the dark state is shelved once per block.
    Blocks(usize),
}

/// Slot of a trial in a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSlot {
    pub label: Label,
    /// Index of the dark block the trial belongs to, under `Blocks`.
    pub block: Option<usize>,
}

/// Labels (and dark-block membership) of every trial in run order.
pub fn schedule_plan(n_dark: usize, n_bright: usize, schedule: Schedule) -> Vec<TrialSlot> {
    let mut plan = Vec::with_capacity(n_dark + n_bright);
    let (mut d, mut b) = (n_dark, n_bright);
    match schedule {
        Schedule::Interleave => {
            while d > 0 || b > 0 {
                if d > 0 {
                    plan.push(TrialSlot { label: Label::Dark, block: None });
                    d -= 1;
                }
                if b > 0 {
                    plan.push(TrialSlot { label: Label::Bright, block: None });
                    b -= 1;
                }
            }
        }
        Schedule::Blocks(m) => {
            let m = m.max(1);
            let mut block = 0;
            while d > 0 || b > 0 {
                let nd = d.min(m);
                plan.extend((0..nd).map(|_| TrialSlot { label: Label::Dark, block: Some(block) }));
                d -= nd;
                let nb = b.min(m);
                plan.extend((0..nb).map(|_| TrialSlot { label: Label::Bright, block: None }));
                b -= nb;
                block += 1;
            }
        }
    }
    plan
}

/// A protocol bound to a set of atomic constants.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: ProtocolConfig,
    shelf: Option<DecayChannels>,
    leak_bright: Option<Exp<f64>>,
    leak_dark: Option<Exp<f64>>,
}

impl Simulator {
    pub fn new(config: ProtocolConfig, atomic: &AtomicConstants) -> Result<Self> {
        config.validate()?;
        let shelf = match (config.kind, config.shelf_level) {
            (ProtocolKind::D52Shelved, Some(level)) => atomic.decay_channels(level)?,
            _ => None,
        };
        let exp = |tau: Option<f64>| tau.map(|t| Exp::new(1.0 / t).expect("validated tau"));
        Ok(Simulator {
            leak_bright: exp(config.tau_bright),
            leak_dark: exp(config.tau_dark),
            config,
            shelf,
        })
    }

    pub fn with_defaults(config: ProtocolConfig) -> Result<Self> {
        Simulator::new(config, &AtomicConstants::default())
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    /// Initial state after (attempted) preparation.
    pub fn initial_state(&self, prepared: Label, shelved: bool) -> InternalState {
        match (prepared, self.config.kind) {
            (Label::Bright, _) => InternalState::BrightScattering,
            (Label::Dark, ProtocolKind::Standard) => InternalState::DarkQubit,
            (Label::Dark, _) if !shelved => InternalState::BrightScattering,
            (Label::Dark, ProtocolKind::D52Shelved) => {
                InternalState::ShelvedD(self.config.shelf_level.expect("validated"))
            }
            (Label::Dark, ProtocolKind::F72Shelved) => InternalState::ShelvedF,
        }
    }

    pub fn draw_shelving<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.config.shelving_success()
    }

    pub fn simulate_trial(&self, prepared: Label, seed: u64) -> TimeTagStream {
        let mut rng = rng::from_seed(seed);
        let shelved = self.draw_shelving(&mut rng);
        let start = self.initial_state(prepared, shelved);
        self.evolve(prepared, start, &mut rng)
    }

    /// Runs one window from a given initial state.
    pub fn evolve(&self, prepared: Label, start: InternalState, rng: &mut ChaCha8Rng) -> TimeTagStream {
        let horizon = self.config.detection_time;
        let mut t = 0.0;
        let mut state = start;
        let mut trajectory = vec![(0.0, state)];
        let mut tags = Vec::new();
        loop {
            let next = self.next_transition(state, rng);
            let end = next.map_or(horizon, |(dt, _)| (t + dt).min(horizon));
            self.emit(state, t, end, rng, &mut tags);
            match next {
                Some((dt, to)) if t + dt < horizon => {
                    t += dt;
                    state = to;
                    trajectory.push((t, state));
                }
                _ => break,
            }
        }
        tags.sort_by(f64::total_cmp);
        TimeTagStream { tags, true_label: prepared, trajectory, detection_time: horizon }
    }

    fn next_transition(&self, state: InternalState, rng: &mut ChaCha8Rng) -> Option<(f64, InternalState)> {
        match state {
            InternalState::BrightScattering => self
                .leak_bright
                .map(|d| (d.sample(rng), InternalState::DarkQubit)),
            InternalState::DarkQubit => self
                .leak_dark
                .map(|d| (d.sample(rng), InternalState::BrightScattering)),
            InternalState::ShelvedD(_) => {
                let ch = self.shelf.as_ref()?;
                let ev = ch.sample(rng);
                let to = match ev.destination.term {
                    Term::F72 => InternalState::ShelvedF,
                    _ => InternalState::BrightScattering,
                };
                Some((ev.delay, to))
            }
            InternalState::ShelvedF => None,
        }
    }

    fn emit(&self, state: InternalState, from: f64, to: f64, rng: &mut ChaCha8Rng, tags: &mut Vec<f64>) {
        let rate = match state {
            InternalState::BrightScattering => self.config.rate_bright + self.config.rate_background,
            _ => self.config.rate_background,
        };
        let mean = rate * (to - from);
        if mean <= 0.0 {
            return;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
        tags.extend((0..n).map(|_| from + (to - from) * rng.random::<f64>()));
    }

    /// Runs a batch and maps every trial through `f` as it is produced.
    ///
    /// Trial `i` is seeded from `(seed, i)`; F₇/₂ dark blocks draw their
    /// shelving outcome from `(seed, block)`. Output order follows the plan
    /// and is independent of the thread pool size.
    pub fn run_batch_map<T, F>(
        &self,
        n_dark: usize,
        n_bright: usize,
        schedule: Schedule,
        seed: u64,
        f: F,
    ) -> Vec<T>
    where
        T: Send,
        F: Fn(TimeTagStream) -> T + Sync,
    {
        let plan = schedule_plan(n_dark, n_bright, schedule);
        let per_block = self.config.kind == ProtocolKind::F72Shelved;
        plan.par_iter()
            .enumerate()
            .map(|(i, slot)| {
                let mut rng = rng::stream(seed, domain::TRIAL, i as u64);
                let own = self.draw_shelving(&mut rng);
                let shelved = match slot.block {
                    Some(b) if per_block => {
                        self.draw_shelving(&mut rng::stream(seed, domain::BLOCK_SHELVING, b as u64))
                    }
                    _ => own,
                };
                let start = self.initial_state(slot.label, shelved);
                f(self.evolve(slot.label, start, &mut rng))
            })
            .collect()
    }

    pub fn run_batch(&self, n_dark: usize, n_bright: usize, schedule: Schedule, seed: u64) -> TrialDataset {
        TrialDataset {
            config: self.config.clone(),
            seed,
            schedule,
            trials: self.run_batch_map(n_dark, n_bright, schedule, seed, |s| s),
        }
    }

    /// Like [`Simulator::run_batch`] but keeps only `k` subbin counts per
    /// trial, which bounds memory for very large batches.
    pub fn run_batch_binned(
        &self,
        n_dark: usize,
        n_bright: usize,
        schedule: Schedule,
        seed: u64,
        k: usize,
    ) -> BinnedDataset {
        let rows = self.run_batch_map(n_dark, n_bright, schedule, seed, |s| {
            (s.true_label, s.bin_counts(k))
        });
        BinnedDataset::from_rows(self.config.detection_time, k, rows)
    }
}

/// `simulate_trial` with default atomic constants.
pub fn simulate_trial(config: &ProtocolConfig, prepared: Label, seed: u64) -> Result<TimeTagStream> {
    Ok(Simulator::with_defaults(config.clone())?.simulate_trial(prepared, seed))
}

/// `run_batch` with default atomic constants.
pub fn run_batch(
    config: &ProtocolConfig,
    n_dark: usize,
    n_bright: usize,
    schedule: Schedule,
    seed: u64,
) -> Result<TrialDataset> {
    Ok(Simulator::with_defaults(config.clone())?.run_batch(n_dark, n_bright, schedule, seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    pub config: ProtocolConfig,
    pub seed: u64,
    pub schedule: Schedule,
    pub trials: Vec<TimeTagStream>,
}

impl TrialDataset {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Subbin counts over the truncated window `[0, window)`.
    pub fn binned(&self, window: f64, k: usize) -> BinnedDataset {
        let mut counts = vec![0u32; self.trials.len() * k];
        counts
            .par_chunks_mut(k)
            .zip(self.trials.par_iter())
            .for_each(|(row, s)| s.bin_into(window, row));
        BinnedDataset {
            detection_time: window,
            k,
            labels: self.trials.iter().map(|s| s.true_label).collect(),
            counts,
        }
    }

    /// Columnar CSV: `trial_id,true_label,c0,…` over the configured subbins.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.binned(self.config.detection_time, self.config.subbins).write_csv(w)
    }

    pub fn write_tag_dump<W: Write>(&self, w: W) -> Result<()> {
        write_tag_dump(w, self.trials.iter().map(|s| s.tags.as_slice()))
    }
}

/// Flat per-trial subbin counts.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedDataset {
    pub detection_time: f64,
    pub k: usize,
    pub labels: Vec<Label>,
    /// Row-major `labels.len() × k`.
    pub counts: Vec<u32>,
}

impl BinnedDataset {
    fn from_rows(detection_time: f64, k: usize, rows: Vec<(Label, Vec<u32>)>) -> Self {
        let mut labels = Vec::with_capacity(rows.len());
        let mut counts = Vec::with_capacity(rows.len() * k);
        for (l, c) in rows {
            labels.push(l);
            counts.extend(c);
        }
        BinnedDataset { detection_time, k, labels, counts }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.k..(i + 1) * self.k]
    }

    pub fn totals(&self) -> Vec<f64> {
        self.counts
            .chunks(self.k)
            .map(|r| r.iter().map(|&c| c as f64).sum())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (0..self.k).map(|i| format!("c{i}")).collect();
        writeln!(w, "trial_id,true_label,{}", cols.join(","))?;
        for (i, label) in self.labels.iter().enumerate() {
            let row: Vec<String> = self.row(i).iter().map(u32::to_string).collect();
            writeln!(w, "{i},{label},{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, detection_time: f64) -> Result<Self> {
        let mut text = String::new();
        std::io::BufReader::new(r).read_to_string(&mut text)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let k = header.split(',').count().saturating_sub(2);
        if k == 0 {
            return Err(Error::Parse("CSV has no count columns".into()));
        }
        let mut labels = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 2 {
                return Err(Error::Parse(format!("line {}: expected {} fields", n + 2, k + 2)));
            }
            labels.push(fields[1].parse()?);
            for f in &fields[2..] {
                counts.push(
                    f.trim()
                        .parse()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?,
                );
            }
        }
        Ok(BinnedDataset { detection_time, k, labels, counts })
    }
}

/// Binary dump: for each trial a little-endian `u64` tag count followed by
/// that many little-endian `f64` arrival times in seconds.
pub fn write_tag_dump<'a, W: Write>(mut w: W, trials: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
    for tags in trials {
        w.write_all(&(tags.len() as u64).to_le_bytes())?;
        for t in tags {
            w.write_all(&t.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tag_dump<R: Read>(mut r: R) -> Result<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut pos = 0;
    let take8 = |pos: &mut usize| -> Result<[u8; 8]> {
        let chunk = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| Error::Parse("truncated tag dump".into()))?;
        *pos += 8;
        Ok(chunk.try_into().expect("8 bytes"))
    };
    while pos < bytes.len() {
        let n = u64::from_le_bytes(take8(&mut pos)?) as usize;
        let mut tags = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            tags.push(f64::from_le_bytes(take8(&mut pos)?));
        }
        out.push(tags);
    }
    Ok(out)
}
