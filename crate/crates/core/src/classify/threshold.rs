use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

/// Scalar discriminator: a value above `threshold` reads as bright.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub threshold: f64,
    /// Mean of the dark and bright error rates on the calibration data.
    pub calibration_error: f64,
}

impl ThresholdModel {
    pub fn classify(&self, value: f64) -> Label {
        classify_threshold(self, value)
    }
}

pub fn classify_threshold(model: &ThresholdModel, value: f64) -> Label {
    if value > model.threshold {
        Label::Bright
    } else {
        Label::Dark
    }
}

/// Fits the threshold minimizing `(ε_d + ε_b)/2` on labeled calibration data.
///
/// Candidates are one value below the minimum, the midpoints between
/// consecutive distinct values, and the maximum itself; among equally good
/// candidates the largest wins.
pub fn fit_threshold(values: &[f64], labels: &[Label]) -> Result<ThresholdModel> {
    if values.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: values.len(), got: labels.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("calibration values must be finite"));
    }
    let n_dark = labels.iter().filter(|l| **l == Label::Dark).count();
    let n_bright = labels.len() - n_dark;
    if n_dark == 0 || n_bright == 0 {
        return Err(Error::MissingClass);
    }
    let mut pairs: Vec<(f64, Label)> = values.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let error = |dark_above: usize, bright_at_or_below: usize| {
        (dark_above as f64 / n_dark as f64 + bright_at_or_below as f64 / n_bright as f64) / 2.0
    };
    let mut dark_above = n_dark;
    let mut bright_below = 0;
    let mut best = ThresholdModel {
        threshold: pairs[0].0 - 1.0,
        calibration_error: error(dark_above, bright_below),
    };
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            match pairs[i].1 {
                Label::Dark => dark_above -= 1,
                Label::Bright => bright_below += 1,
            }
            i += 1;
        }
        let threshold = match pairs.get(i) {
            Some(next) => 0.5 * (v + next.0),
            None => v,
        };
        let eps = error(dark_above, bright_below);
        if eps <= best.calibration_error {
            best = ThresholdModel { threshold, calibration_error: eps };
        }
    }
    Ok(best)
}
