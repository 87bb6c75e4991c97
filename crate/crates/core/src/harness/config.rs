use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atomic::AtomicConstants;
use crate::camera::{FeatureSet, FrameSpec};
use crate::classify::ForestParams;
use crate::mc::{ProtocolConfig, Schedule};
use crate::transfer::PulseSequence;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Apd,
    Emccd,
}

impl Detector {
    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Apd => "apd",
            Detector::Emccd => "emccd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    /// Total counts (APD) or hot-pixel sum (EMCCD) against a fitted threshold.
    Threshold,
    /// Time-resolved subbin likelihood (APD only).
    Subbin,
    /// Random forest on ROI pixels (EMCCD only).
    Classifier,
}

impl Analysis {
    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Threshold => "threshold",
            Analysis::Subbin => "subbin",
            Analysis::Classifier => "classifier",
        }
    }

    pub fn supports(self, detector: Detector) -> bool {
        !matches!(
            (self, detector),
            (Analysis::Subbin, Detector::Emccd) | (Analysis::Classifier, Detector::Apd)
        )
    }
}

/// Geometric detection-time grid from `start` to `stop` (s), `points` long.
pub fn log_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![start];
    }
    let r = (stop / start).ln() / (points - 1) as f64;
    (0..points).map(|i| start * (r * i as f64).exp()).collect()
}

fn default_times() -> Vec<f64> {
    vec![
        0.05e-3, 0.075e-3, 0.1e-3, 0.125e-3, 0.15e-3, 0.2e-3, 0.25e-3, 0.3e-3, 0.4e-3, 0.5e-3,
        0.75e-3, 1.0e-3, 1.5e-3,
    ]
}

fn default_protocols() -> Vec<ProtocolConfig> {
    vec![
        ProtocolConfig::standard(),
        ProtocolConfig::d52_shelved(),
        ProtocolConfig::f72_shelved(),
    ]
}

/// Settings for the RAP transfer scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RapScenario {
    /// Rabi frequency for the Γ sweep (Hz).
    pub rabi: f64,
    /// Dephasing rates Γ (Hz).
    pub gammas: Vec<f64>,
    /// Dephasing rate for the Rabi-frequency sweep (Hz).
    pub gamma: f64,
    pub rabis: Vec<f64>,
}

impl Default for RapScenario {
    fn default() -> Self {
        let mut gammas = log_grid(1.0, 1e6, 25);
        gammas.extend([2.0, 2.6e3]);
        gammas.sort_by(f64::total_cmp);
        let mut rabis = log_grid(1e3, 1e7, 25);
        rabis.extend([19e3, 2.5e6]);
        rabis.sort_by(f64::total_cmp);
        RapScenario { rabi: 19e3, gammas, gamma: 2.6e3, rabis }
    }
}

/// Settings for the shelving pulse-train scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShelvingScenario {
    pub d52_f3: PulseSequence,
    pub d52_f2: PulseSequence,
    /// Shots per point for the simulated measurement.
    pub shots: usize,
}

impl Default for ShelvingScenario {
    fn default() -> Self {
        ShelvingScenario {
            d52_f3: PulseSequence::d52_f3_three_pulse(),
            d52_f2: PulseSequence::d52_f2_five_pulse(),
            shots: 1000,
        }
    }
}

/// Settings for the synthetic repump-spectrum scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakfitScenario {
    /// Gaussian σ of each line (Hz).
    pub line_sigma: f64,
    /// Half-width of each scan (Hz).
    pub scan_half_width: f64,
    pub points: usize,
    /// Additive Gaussian noise relative to the peak height.
    pub noise: f64,
    pub offset: f64,
}

impl Default for PeakfitScenario {
    fn default() -> Self {
        PeakfitScenario {
            line_sigma: 30e6,
            scan_half_width: 200e6,
            points: 81,
            noise: 0.02,
            offset: 0.05,
        }
    }
}

/// Settings for the large F₇/₂ block run that resolves the error floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloorRun {
    pub trials: usize,
    pub block: usize,
    pub detection_time: f64,
}

impl Default for FloorRun {
    fn default() -> Self {
        FloorRun { trials: 1_000_000, block: 1000, detection_time: 1e-3 }
    }
}

/// One JSON document describing an experiment. Every field is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub atomic: AtomicConstants,
    pub protocols: Vec<ProtocolConfig>,
    pub detector: Detector,
    pub analyses: Vec<Analysis>,
    pub trials_per_class: usize,
    pub detection_times: Vec<f64>,
    pub split_fraction: f64,
    pub resamples: usize,
    pub schedule: Schedule,
    pub camera: FrameSpec,
    pub forest: ForestParams,
    /// Classifier input built from each ROI.
    pub features: FeatureSet,
    /// Bright trials used to locate the ROI.
    pub roi_calibration_frames: usize,
    pub rap: RapScenario,
    pub shelving: ShelvingScenario,
    pub peakfit: PeakfitScenario,
    pub floor: FloorRun,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            atomic: AtomicConstants::default(),
            protocols: default_protocols(),
            detector: Detector::Apd,
            analyses: vec![Analysis::Threshold, Analysis::Subbin],
            trials_per_class: 20_000,
            detection_times: default_times(),
            split_fraction: crate::classify::split::DEFAULT_CALIBRATION_FRACTION,
            resamples: 20,
            schedule: Schedule::Interleave,
            camera: FrameSpec::default(),
            forest: ForestParams::default(),
            features: FeatureSet::default(),
            roi_calibration_frames: 500,
            rap: RapScenario::default(),
            shelving: ShelvingScenario::default(),
            peakfit: PeakfitScenario::default(),
            floor: FloorRun::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.atomic.validate().map_err(|e| Error::config(e.to_string()))?;
        if self.protocols.is_empty() {
            return Err(Error::config("at least one protocol is required"));
        }
        for p in &self.protocols {
            p.validate()?;
        }
        if self.detection_times.is_empty() {
            return Err(Error::config("detection_times must be nonempty"));
        }
        if self.detection_times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::config("detection times must be finite and > 0"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::config("split_fraction must lie in (0, 1)"));
        }
        let needed = (20.0 / self.split_fraction).ceil() as usize;
        if self.trials_per_class < needed {
            return Err(Error::config(format!(
                "trials_per_class = {} is too small for split_fraction {}: need ≥ {needed}",
                self.trials_per_class, self.split_fraction
            )));
        }
        if self.resamples == 0 {
            return Err(Error::config("resamples must be ≥ 1"));
        }
        if self.analyses.is_empty() {
            return Err(Error::config("at least one analysis is required"));
        }
        if let Some(a) = self.analyses.iter().find(|a| !a.supports(self.detector)) {
            return Err(Error::config(format!(
                "analysis {} is not available for detector {}",
                a.as_str(),
                self.detector.as_str()
            )));
        }
        if self.detector == Detector::Emccd {
            self.camera.validate()?;
        }
        if self.forest.n_trees == 0 || self.forest.max_depth == 0 {
            return Err(Error::config("forest needs n_trees ≥ 1 and max_depth ≥ 1"));
        }
        if let Schedule::Blocks(0) = self.schedule {
            return Err(Error::config("block size must be ≥ 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn partial_protocol_sections_merge_with_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"protocols": [{"kind": "d52_shelved", "rate_background": 0}],
                "detector": "emccd", "analyses": ["threshold", "classifier"],
                "schedule": {"blocks": 100}}"#,
        )
        .unwrap();
        assert_eq!(cfg.protocols[0].rate_background, 0.0);
        assert_eq!(cfg.protocols[0].shelving_error, Some(0.007));
        assert_eq!(cfg.schedule, Schedule::Blocks(100));
    }

    #[test]
    fn infeasible_configs() {
        for text in [
            r#"{"detection_times": []}"#,
            r#"{"trials_per_class": 100}"#,
            r#"{"resamples": 0}"#,
            r#"{"detector": "emccd", "analyses": ["subbin"]}"#,
            r#"{"analyses": ["classifier"]}"#,
            r#"{"unknown": 1}"#,
            r#"{"protocols": [{"kind": "standard", "pump_time": 0.1}]}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }
}
