//! Simulation and analysis toolkit for electron-shelved state detection of
//! hyperfine trapped-ion qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`atomic`]: measured level data, transition frequencies and stochastic decays.
//! - [`transfer`]: population-transfer models (pulse trains, rapid adiabatic
//!   passage under dephasing, incoherent pumping).
//! - [`mc`]: event-driven Monte Carlo of the photon record for one detection window.
//! - [`camera`]: EMCCD frame synthesis and region-of-interest handling.
//! - [`classify`]: discrimination algorithms and error statistics.
//! - [`harness`]: experiment configuration, detection-time sweeps and named scenarios.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod camera;
pub mod classify;
mod error;
pub mod harness;
pub mod lm;
pub mod mc;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};

/// Prepared (and inferred) logical state of the qubit under detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Dark,
    Bright,
}

impl Label {
    pub fn is_bright(self) -> bool {
        matches!(self, Label::Bright)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Dark => "dark",
            Label::Bright => "bright",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dark" | "0" => Ok(Label::Dark),
            "bright" | "1" => Ok(Label::Bright),
            other => Err(Error::Parse(format!("unknown label `{other}`"))),
        }
    }
}
