//! Stratified calibration/evaluation partition.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::{Error, Label, Result};

pub const DEFAULT_CALIBRATION_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub fraction: f64,
    /// Sorted trial indices used for calibration/training.
    pub calibration: Vec<usize>,
    /// Sorted trial indices used for evaluation.
    pub evaluation: Vec<usize>,
}

impl LabeledSplit {
    /// Draws `fraction` of each class (at least one) for calibration.
    pub fn stratified(labels: &[Label], fraction: f64, seed: u64, draw: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::config("calibration fraction must lie in (0, 1)"));
        }
        let mut rng = rng::stream(seed, domain::SPLIT, draw);
        let mut calibration = Vec::new();
        let mut evaluation = Vec::new();
        for class in [Label::Dark, Label::Bright] {
            let mut idx: Vec<usize> =
                (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if idx.len() < 2 {
                return Err(Error::MissingClass);
            }
            let take = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1);
            idx.shuffle(&mut rng);
            calibration.extend_from_slice(&idx[..take]);
            evaluation.extend_from_slice(&idx[take..]);
        }
        calibration.sort_unstable();
        evaluation.sort_unstable();
        Ok(LabeledSplit { fraction, calibration, evaluation })
    }
}
