//! Experiment orchestration: JSON configuration, detection-time sweeps with
//! resampled calibration, and the named reproduction scenarios.
//!
//! All randomness flows from the configured master seed through
//! [`crate::rng::derive_seed`], so outputs do not depend on the number of
//! worker threads.

mod config;
mod scenario;
mod sweep;

pub use config::{
    log_grid, Analysis, Detector, ExperimentConfig, FloorRun, PeakfitScenario, RapScenario,
    ShelvingScenario,
};
pub use scenario::{floor_run, run_scenario, Artifacts, Scenario};
pub use sweep::{sweep_detection_time, GridCounts, SweepResult, SweepRow, CSV_HEADER};

use crate::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers (0: rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// fit/convergence failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::UnknownScenario(_)
        | Error::Parse(_)
        | Error::Domain(_)
        | Error::MissingClass
        | Error::DimensionMismatch { .. }
        | Error::UnsupportedTransition(_)
        | Error::StableState(_) => 2,
        Error::FitFailure { .. } | Error::NoIonLocated => 3,
        Error::Io(_) => 1,
    }
}
