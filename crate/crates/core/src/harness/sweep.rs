use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{fit_roi, render_stack, select_n_hot, FeatureSet, Frame, Roi};
use crate::classify::{
    classify_pixels, fit_threshold, train_classifier, ErrorReport, ForestParams, LabeledSplit,
    SubbinModel,
};
use crate::mc::{schedule_plan, ProtocolConfig, ProtocolKind, Simulator};
use crate::rng::{derive_seed, domain};
use crate::{Error, Label, Result};

use super::config::{Analysis, Detector, ExperimentConfig};

/// One grid point of one protocol/analysis pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub time: f64,
    pub protocol: ProtocolKind,
    pub detector: Detector,
    pub analysis: Analysis,
    /// Evaluation report for the first calibration draw.
    pub report: ErrorReport,
    /// Mean and sample standard deviation of ε over calibration draws.
    pub band_mean: f64,
    pub band_sigma: f64,
    pub resamples: usize,
    /// Hot-pixel count chosen on the first draw (EMCCD threshold only).
    pub n_hot: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub trials_per_class: usize,
    pub split_fraction: f64,
    pub runtime_seconds: f64,
}

pub const CSV_HEADER: &str = "time,protocol,detector,analysis,eps_dark,eps_bright,eps,ci_lo,ci_hi,band_mean,band_sigma,n_dark,n_bright,n_hot";

impl SweepResult {
    /// Plot-ready CSV with a fixed column order; contains no timing data so
    /// equal inputs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.protocol,
                r.detector.as_str(),
                r.analysis.as_str(),
                r.report.eps_dark,
                r.report.eps_bright,
                r.report.eps,
                r.report.ci.0,
                r.report.ci.1,
                r.band_mean,
                r.band_sigma,
                r.report.n_dark,
                r.report.n_bright,
                r.n_hot.map_or(String::new(), |n| n.to_string()),
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rows_for(&self, protocol: ProtocolKind, analysis: Analysis) -> impl Iterator<Item = &SweepRow> {
        self.rows
            .iter()
            .filter(move |r| r.protocol == protocol && r.analysis == analysis)
    }

    /// Grid point with the lowest evaluated ε (earliest on ties).
    pub fn optimum(&self, protocol: ProtocolKind, analysis: Analysis) -> Option<&SweepRow> {
        self.rows_for(protocol, analysis)
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.report.eps <= r.report.eps => Some(b),
                _ => Some(r),
            })
    }
}

fn mean_sigma(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn report_on(indices: &[usize], predictions: &[Label], labels: &[Label]) -> Result<ErrorReport> {
    let p: Vec<Label> = indices.iter().map(|&i| predictions[i]).collect();
    let l: Vec<Label> = indices.iter().map(|&i| labels[i]).collect();
    crate::classify::error_report(&p, &l)
}

fn pick<T: Clone>(indices: &[usize], v: &[T]) -> Vec<T> {
    indices.iter().map(|&i| v[i].clone()).collect()
}

/// Per-draw reports for a scalar statistic thresholded on each calibration set.
fn threshold_reports(values: &[f64], labels: &[Label], splits: &[LabeledSplit]) -> Result<Vec<ErrorReport>> {
    splits
        .par_iter()
        .map(|s| {
            let model = fit_threshold(&pick(&s.calibration, values), &pick(&s.calibration, labels))?;
            let pred: Vec<Label> = values.iter().map(|&v| model.classify(v)).collect();
            report_on(&s.evaluation, &pred, labels)
        })
        .collect()
}

fn summarize(
    time: f64,
    protocol: ProtocolKind,
    detector: Detector,
    analysis: Analysis,
    reports: Vec<ErrorReport>,
    n_hot: Option<usize>,
) -> SweepRow {
    let eps: Vec<f64> = reports.iter().map(|r| r.eps).collect();
    let (band_mean, band_sigma) = mean_sigma(&eps);
    SweepRow {
        time,
        protocol,
        detector,
        analysis,
        resamples: reports.len(),
        report: reports.into_iter().next().expect("at least one resample"),
        band_mean,
        band_sigma,
        n_hot,
    }
}

/// Everything the camera analyses need from one calibration draw.
struct CameraDraw {
    roi: Roi,
    pixels: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
}

fn camera_draw(
    frames: &[Frame],
    labels: &[Label],
    split: &LabeledSplit,
    max_roi_frames: usize,
    set: Option<FeatureSet>,
) -> Result<CameraDraw> {
    let bright: Vec<Frame> = split
        .calibration
        .iter()
        .filter(|&&i| labels[i].is_bright())
        .take(max_roi_frames.max(1))
        .map(|&i| frames[i].clone())
        .collect();
    let roi = fit_roi(&bright)?;
    let pixels: Vec<Vec<f64>> = frames.par_iter().map(|f| roi.pixels(f)).collect::<Result<_>>()?;
    let features = match set {
        Some(set) => frames.par_iter().map(|f| roi.features(f, set)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    Ok(CameraDraw { roi, pixels, features })
}

/// Simulated photon records at every grid time for one protocol: labels
/// and row-major `trials × grid × k` subbin counts.
pub struct GridCounts {
    pub labels: Vec<Label>,
    pub k: usize,
    pub times: Vec<f64>,
    pub counts: Vec<u32>,
}

impl GridCounts {
    pub fn simulate(cfg: &ExperimentConfig, protocol: &ProtocolConfig, seed: u64) -> Result<Self> {
        let times = cfg.detection_times.clone();
        let t_max = times.iter().copied().fold(0.0, f64::max);
        let k = protocol.subbins;
        let sim = Simulator::new(protocol.clone().with_detection_time(t_max), &cfg.atomic)?;
        let n = cfg.trials_per_class;
        let labels: Vec<Label> = schedule_plan(n, n, cfg.schedule).iter().map(|s| s.label).collect();
        let rows = sim.run_batch_map(n, n, cfg.schedule, seed, |s| {
            times.iter().flat_map(|&t| s.bin_counts_until(t, k)).collect::<Vec<u32>>()
        });
        Ok(GridCounts { labels, k, counts: rows.concat(), times })
    }

    pub fn bins(&self, trial: usize, grid: usize) -> &[u32] {
        let stride = self.times.len() * self.k;
        let at = trial * stride + grid * self.k;
        &self.counts[at..at + self.k]
    }

    pub fn totals(&self, grid: usize) -> Vec<f64> {
        (0..self.labels.len())
            .map(|i| self.bins(i, grid).iter().map(|&c| c as f64).sum())
            .collect()
    }
}

/// Sweeps detection time for every configured protocol and analysis.
///
/// Each protocol is simulated once at the longest grid time; shorter windows
/// reuse the same records truncated, so neighbouring grid points share
/// randomness. Calibration subsets are redrawn `resamples` times per point.
pub fn sweep_detection_time(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    for (pi, protocol) in cfg.protocols.iter().enumerate() {
        let seed = derive_seed(cfg.seed, domain::SCENARIO, pi as u64);
        let data = GridCounts::simulate(cfg, protocol, seed)?;
        let splits: Vec<LabeledSplit> = (0..cfg.resamples as u64)
            .map(|r| LabeledSplit::stratified(&data.labels, cfg.split_fraction, cfg.seed, r))
            .collect::<Result<_>>()?;
        for (g, &t) in data.times.iter().enumerate() {
            let totals = data.totals(g);
            match cfg.detector {
                Detector::Apd => {
                    for &analysis in &cfg.analyses {
                        let reports = match analysis {
                            Analysis::Threshold => threshold_reports(&totals, &data.labels, &splits)?,
                            Analysis::Subbin => {
                                let model = SubbinModel::from_protocol(protocol, &cfg.atomic, t, data.k)?;
                                let pred: Vec<Label> = (0..data.labels.len())
                                    .into_par_iter()
                                    .map(|i| model.classify_counts(data.bins(i, g)).map(|(l, _)| l))
                                    .collect::<Result<_>>()?;
                                splits
                                    .iter()
                                    .map(|s| report_on(&s.evaluation, &pred, &data.labels))
                                    .collect::<Result<_>>()?
                            }
                            Analysis::Classifier => unreachable!("rejected by validation"),
                        };
                        rows.push(summarize(t, protocol.kind, cfg.detector, analysis, reports, None));
                    }
                }
                Detector::Emccd => {
                    let photons: Vec<u64> = totals.iter().map(|&c| c as u64).collect();
                    let frame_seed = derive_seed(seed, domain::FRAME, g as u64);
                    let frames = render_stack(&photons, &cfg.camera, t, frame_seed);
                    let draws: Vec<CameraDraw> = splits
                        .iter()
                        .map(|s| {
                            let set = cfg.analyses.contains(&Analysis::Classifier).then_some(cfg.features);
                            camera_draw(&frames, &data.labels, s, cfg.roi_calibration_frames, set)
                        })
                        .collect::<Result<_>>()?;
                    for &analysis in &cfg.analyses {
                        let (reports, n_hot) = match analysis {
                            Analysis::Threshold => {
                                let mut n_hot = None;
                                let mut reports = Vec::with_capacity(splits.len());
                                for (s, d) in splits.iter().zip(&draws) {
                                    let calib: Vec<Frame> = pick(&s.calibration, &frames);
                                    let (n, model) =
                                        select_n_hot(&calib, &pick(&s.calibration, &data.labels), &d.roi)?;
                                    n_hot.get_or_insert(n);
                                    let pred: Vec<Label> = d
                                        .pixels
                                        .iter()
                                        .map(|px| model.classify(hot_sum(px, n)))
                                        .collect();
                                    reports.push(report_on(&s.evaluation, &pred, &data.labels)?);
                                }
                                (reports, n_hot)
                            }
                            Analysis::Classifier => {
                                let mut reports = Vec::with_capacity(splits.len());
                                for (r, (s, d)) in splits.iter().zip(&draws).enumerate() {
                                    let params = ForestParams {
                                        seed: derive_seed(
                                            cfg.forest.seed ^ seed,
                                            domain::TREE,
                                            (g * cfg.resamples + r) as u64,
                                        ),
                                        ..cfg.forest
                                    };
                                    let model = train_classifier(
                                        &pick(&s.calibration, &d.features),
                                        &pick(&s.calibration, &data.labels),
                                        &params,
                                    )?;
                                    let pred: Vec<Label> = d
                                        .features
                                        .par_iter()
                                        .map(|px| classify_pixels(&model, px))
                                        .collect::<Result<_>>()?;
                                    reports.push(report_on(&s.evaluation, &pred, &data.labels)?);
                                }
                                (reports, None)
                            }
                            Analysis::Subbin => unreachable!("rejected by validation"),
                        };
                        rows.push(summarize(t, protocol.kind, cfg.detector, analysis, reports, n_hot));
                    }
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::config("sweep produced no rows"));
    }
    Ok(SweepResult {
        rows,
        seed: cfg.seed,
        trials_per_class: cfg.trials_per_class,
        split_fraction: cfg.split_fraction,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn hot_sum(px: &[f64], n: usize) -> f64 {
    let mut v = px.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v[..n].iter().sum()
}
