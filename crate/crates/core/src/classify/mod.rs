//! State discrimination and error statistics.
//!
//! - [`threshold`]: optimal scalar threshold by exhaustive scan.
//! - [`subbin`]: time-resolved maximum likelihood over subbin counts.
//! - [`forest`]: bagged decision trees over ROI pixel vectors.
//! - [`report`]: dark/bright error rates with Wilson intervals.
//! - [`peakfit`]: multi-Gaussian spectral peak fitting.

pub mod forest;
pub mod peakfit;
pub mod report;
pub mod split;
pub mod subbin;
pub mod threshold;

pub use forest::{classify_pixels, train_classifier, ForestModel, ForestParams};
pub use peakfit::{gaussian_peak_fit, Peak, PeakFitResult};
pub use report::{error_report, qpn_sigma, wilson_interval, ErrorReport};
pub use split::LabeledSplit;
pub use subbin::{classify_subbin, SubbinModel};
pub use threshold::{classify_threshold, fit_threshold, ThresholdModel};
