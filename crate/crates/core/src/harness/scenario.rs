use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution, Normal};

use crate::camera::{fit_roi, render_stack};
use crate::classify::{error_report, fit_threshold, gaussian_peak_fit, qpn_sigma, LabeledSplit};
use crate::mc::{ProtocolConfig, ProtocolKind, Schedule, Simulator};
use crate::rng::{self, derive_seed, domain};
use crate::transfer::{rap_max_transfer, sequence_residual, PulseSequence};
use crate::{Error, Label, Result};

use super::config::{Analysis, Detector, ExperimentConfig};
use super::sweep::{sweep_detection_time, SweepResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Fig3Peakfit,
    Fig4Shelving,
    Fig5Rap,
    Fig6Apd,
    Fig7Emccd,
    Table2Summary,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Fig3Peakfit,
        Scenario::Fig4Shelving,
        Scenario::Fig5Rap,
        Scenario::Fig6Apd,
        Scenario::Fig7Emccd,
        Scenario::Table2Summary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig3Peakfit => "fig3-peakfit",
            Scenario::Fig4Shelving => "fig4-shelving",
            Scenario::Fig5Rap => "fig5-rap",
            Scenario::Fig6Apd => "fig6-apd",
            Scenario::Fig7Emccd => "fig7-emccd",
            Scenario::Table2Summary => "table2-summary",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Files produced by a scenario plus a human-readable summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    /// `(file name, contents)` in emission order.
    pub files: Vec<(String, String)>,
    pub summary: String,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// CSV files only, in emission order.
    pub fn csvs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.files
            .iter()
            .filter(|(n, _)| n.ends_with(".csv"))
            .map(|(n, c)| (n.as_str(), c.as_str()))
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

pub fn run_scenario(name: &str, cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.validate()?;
    match name.parse::<Scenario>()? {
        Scenario::Fig3Peakfit => fig3_peakfit(cfg),
        Scenario::Fig4Shelving => fig4_shelving(cfg),
        Scenario::Fig5Rap => fig5_rap(cfg),
        Scenario::Fig6Apd => fig6_apd(cfg),
        Scenario::Fig7Emccd => fig7_emccd(cfg),
        Scenario::Table2Summary => table2_summary(cfg),
    }
}

fn fig3_peakfit(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let p = &cfg.peakfit;
    if p.points < 4 || !(p.line_sigma > 0.0) || !(p.scan_half_width > 0.0) || !(p.noise >= 0.0) {
        return Err(Error::config("peakfit needs ≥ 4 points, σ > 0, half-width > 0, noise ≥ 0"));
    }
    let lines = [
        ("after_d3", cfg.atomic.freq_760_after_d3.value),
        ("after_d2", cfg.atomic.freq_760_after_d2.value),
    ];
    let noise = Normal::new(0.0, p.noise.max(f64::MIN_POSITIVE)).expect("σ > 0");
    let mut spectrum = String::from("line,frequency,signal,model\n");
    let mut fits = String::from(
        "line,true_center,center,center_err,width,width_err,amplitude,amplitude_err,offset,residual_norm,iterations\n",
    );
    let mut summary = String::new();
    for (li, (name, center)) in lines.into_iter().enumerate() {
        let mut rng = rng::stream(cfg.seed, domain::SCENARIO, 300 + li as u64);
        let step = 2.0 * p.scan_half_width / (p.points - 1) as f64;
        let x: Vec<f64> = (0..p.points).map(|i| center - p.scan_half_width + i as f64 * step).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&f| {
                let g = (-0.5 * ((f - center) / p.line_sigma).powi(2)).exp();
                p.offset + g + if p.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 }
            })
            .collect();
        let fit = gaussian_peak_fit(&x, &y, 1)?;
        let pk = fit.peaks[0];
        for (&f, &s) in x.iter().zip(&y) {
            let m = fit.offset + pk.amplitude * (-0.5 * ((f - pk.center) / pk.width).powi(2)).exp();
            let _ = writeln!(spectrum, "{name},{f},{s},{m}");
        }
        let _ = writeln!(
            fits,
            "{name},{center},{},{},{},{},{},{},{},{},{}",
            pk.center,
            pk.center_err,
            pk.width,
            pk.width_err,
            pk.amplitude,
            pk.amplitude_err,
            fit.offset,
            fit.residual_norm,
            fit.iterations
        );
        let _ = writeln!(
            summary,
            "760 nm line {name}: center {:.6} THz ± {:.3} MHz (true {:.6} THz)",
            pk.center * 1e-12,
            pk.center_err * 1e-6,
            center * 1e-12
        );
    }
    let mut a = Artifacts { summary, ..Default::default() };
    a.add("fig3_spectrum.csv", spectrum);
    a.add("fig3_fit.csv", fits);
    Ok(a)
}

fn fig4_shelving(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let shots = cfg.shelving.shots;
    if shots == 0 {
        return Err(Error::config("shelving.shots must be ≥ 1"));
    }
    let mut csv = String::from("sequence,pulse,efficiency,residual,transferred,qpn_sigma,measured\n");
    let mut summary = String::new();
    let seqs: [(&str, &PulseSequence); 2] =
        [("d52_f3", &cfg.shelving.d52_f3), ("d52_f2", &cfg.shelving.d52_f2)];
    for (si, (name, seq)) in seqs.into_iter().enumerate() {
        let res = sequence_residual(seq);
        let mut rng = rng::stream(cfg.seed, domain::SCENARIO, 400 + si as u64);
        for (k, (&f, &r)) in seq.efficiencies().iter().zip(&res.trajectory).enumerate() {
            let p = 1.0 - r;
            let measured = Binomial::new(shots as u64, p).expect("p ∈ [0, 1]").sample(&mut rng) as f64
                / shots as f64;
            let _ = writeln!(csv, "{name},{},{f},{r},{p},{},{measured}", k + 1, qpn_sigma(p, shots));
        }
        let _ = writeln!(
            summary,
            "{name}: residual after pulse 1 = {:.4}, after pulse {} = {:.4}",
            res.trajectory[0],
            res.trajectory.len(),
            res.residual
        );
    }
    let mut a = Artifacts { summary, ..Default::default() };
    a.add("fig4_shelving.csv", csv);
    Ok(a)
}

fn fig5_rap(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let r = &cfg.rap;
    let mut csv = String::from("sweep,rabi,gamma,sweep_rate,probability,supremum\n");
    let row = |csv: &mut String, sweep: &str, rabi: f64, gamma: f64| -> Result<f64> {
        let opt = rap_max_transfer(rabi, gamma)?;
        let _ = writeln!(
            csv,
            "{sweep},{rabi},{gamma},{},{},{}",
            opt.sweep_rate.map_or(String::new(), |a| a.to_string()),
            opt.probability,
            opt.supremum
        );
        Ok(opt.probability)
    };
    for &g in &r.gammas {
        row(&mut csv, "gamma", r.rabi, g)?;
    }
    for &o in &r.rabis {
        row(&mut csv, "rabi", o, r.gamma)?;
    }
    let lab = rap_max_transfer(r.rabi, r.gamma)?;
    let summary = format!(
        "maximum RAP transfer at Ω = {} Hz, Γ = {} Hz: {:.4}\n",
        r.rabi, r.gamma, lab.probability
    );
    let mut a = Artifacts { summary, ..Default::default() };
    a.add("fig5_rap.csv", csv);
    Ok(a)
}

/// Copy of `cfg` restricted to a detector; analyses not available on it are
/// dropped, falling back to `fallback` when none remain.
fn for_detector(cfg: &ExperimentConfig, detector: Detector, fallback: &[Analysis]) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.detector = detector;
    c.analyses.retain(|a| a.supports(detector));
    if c.analyses.is_empty() {
        c.analyses = fallback.to_vec();
    }
    c
}

fn sweep_summary(res: &SweepResult, cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    for p in &cfg.protocols {
        for &a in &cfg.analyses {
            if let Some(o) = res.optimum(p.kind, a) {
                let _ = writeln!(
                    s,
                    "{:<12} {:<6} {:<10} ε = {:.3e} [{:.2e}, {:.2e}] at t = {:.3} ms",
                    p.kind.as_str(),
                    cfg.detector.as_str(),
                    a.as_str(),
                    o.report.eps,
                    o.report.ci.0,
                    o.report.ci.1,
                    o.time * 1e3
                );
            }
        }
    }
    s
}

/// F₇/₂ floor run at a single detection time with block-wise shelving.
pub fn floor_run(cfg: &ExperimentConfig) -> Result<(crate::classify::ErrorReport, String)> {
    let fl = &cfg.floor;
    if fl.trials < 2 || fl.block == 0 || !(fl.detection_time > 0.0) {
        return Err(Error::config("floor run needs ≥ 2 trials, block ≥ 1 and detection_time > 0"));
    }
    let protocol = cfg
        .protocols
        .iter()
        .find(|p| p.kind == ProtocolKind::F72Shelved)
        .cloned()
        .unwrap_or_else(ProtocolConfig::f72_shelved)
        .with_detection_time(fl.detection_time);
    let sim = Simulator::new(protocol, &cfg.atomic)?;
    let n = fl.trials / 2;
    let seed = derive_seed(cfg.seed, domain::SCENARIO, 600);
    let rows = sim.run_batch_map(n, n, Schedule::Blocks(fl.block), seed, |s| (s.true_label, s.total() as f64));
    let labels: Vec<Label> = rows.iter().map(|r| r.0).collect();
    let totals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let split = LabeledSplit::stratified(&labels, cfg.split_fraction, cfg.seed, 0)?;
    let model = fit_threshold(
        &split.calibration.iter().map(|&i| totals[i]).collect::<Vec<_>>(),
        &split.calibration.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
    )?;
    let pred: Vec<Label> = split.evaluation.iter().map(|&i| model.classify(totals[i])).collect();
    let truth: Vec<Label> = split.evaluation.iter().map(|&i| labels[i]).collect();
    let report = error_report(&pred, &truth)?;

    let max = totals.iter().copied().fold(0.0, f64::max) as usize;
    let mut hist = vec![[0u64; 2]; max + 1];
    for (l, &t) in labels.iter().zip(&totals) {
        hist[t as usize][usize::from(l.is_bright())] += 1;
    }
    let mut csv = String::from("counts,dark,bright\n");
    for (c, h) in hist.iter().enumerate() {
        let _ = writeln!(csv, "{c},{},{}", h[0], h[1]);
    }
    Ok((report, csv))
}

fn fig6_apd(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let c = for_detector(cfg, Detector::Apd, &[Analysis::Threshold, Analysis::Subbin]);
    let res = sweep_detection_time(&c)?;
    let (floor, hist) = floor_run(&c)?;
    let mut a = Artifacts { summary: sweep_summary(&res, &c), ..Default::default() };
    let _ = writeln!(
        a.summary,
        "f72 floor ({} trials, blocks of {}, t = {} ms): ε = {:.2e} [{:.2e}, {:.2e}]",
        c.floor.trials,
        c.floor.block,
        c.floor.detection_time * 1e3,
        floor.eps,
        floor.ci.0,
        floor.ci.1
    );
    a.add("fig6_apd_sweep.csv", res.to_csv());
    a.add("fig6_apd_sweep.json", res.to_json()?);
    a.add("fig6_floor_histogram.csv", hist);
    a.add(
        "fig6_floor_report.csv",
        format!("{}\n{}\n", crate::classify::ErrorReport::CSV_HEADER, floor.csv_row()),
    );
    a.add("fig6_floor_report.json", floor.to_json()?);
    Ok(a)
}

fn fig7_emccd(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let c = for_detector(cfg, Detector::Emccd, &[Analysis::Threshold, Analysis::Classifier]);
    let res = sweep_detection_time(&c)?;
    // ROI descriptor from a bright calibration stack at the middle grid time.
    let t_mid = c.detection_times[c.detection_times.len() / 2];
    let p = &c.protocols[0];
    let photons = ((p.rate_bright + p.rate_background) * t_mid).round() as u64;
    let stack = render_stack(
        &vec![photons; c.roi_calibration_frames.max(1)],
        &c.camera,
        t_mid,
        derive_seed(c.seed, domain::SCENARIO, 700),
    );
    let roi = fit_roi(&stack)?;
    let mut a = Artifacts { summary: sweep_summary(&res, &c), ..Default::default() };
    a.add("fig7_emccd_sweep.csv", res.to_csv());
    a.add("fig7_emccd_sweep.json", res.to_json()?);
    a.add("fig7_roi.json", roi.to_json()?);
    Ok(a)
}

fn table2_summary(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let apd = for_detector(cfg, Detector::Apd, &[Analysis::Threshold, Analysis::Subbin]);
    let apd = ExperimentConfig { analyses: vec![Analysis::Threshold, Analysis::Subbin], ..apd };
    let cam = for_detector(cfg, Detector::Emccd, &[Analysis::Threshold, Analysis::Classifier]);
    let cam = ExperimentConfig { analyses: vec![Analysis::Threshold, Analysis::Classifier], ..cam };
    let results = [(apd.clone(), sweep_detection_time(&apd)?), (cam.clone(), sweep_detection_time(&cam)?)];

    let mut csv = String::from("protocol,detector,analysis,eps,ci_lo,ci_hi,t_opt\n");
    let mut text = format!(
        "{:<12} | {:<24} | {:<24} | {:<24} | {:<24}\n",
        "protocol", "APD threshold", "APD subbin", "EMCCD threshold", "EMCCD classifier"
    );
    text.push_str(&"-".repeat(text.len() - 1));
    text.push('\n');
    for p in &cfg.protocols {
        let mut cells = Vec::new();
        for (c, res) in &results {
            for &an in &c.analyses {
                let Some(o) = res.optimum(p.kind, an) else { continue };
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    p.kind,
                    c.detector.as_str(),
                    an.as_str(),
                    o.report.eps,
                    o.report.ci.0,
                    o.report.ci.1,
                    o.time
                );
                cells.push(format!("{:.2e} @ {:.3} ms", o.report.eps, o.time * 1e3));
            }
        }
        let _ = writeln!(text, "{:<12} | {}", p.kind.as_str(), cells
            .iter()
            .map(|c| format!("{c:<24}"))
            .collect::<Vec<_>>()
            .join(" | "));
    }
    let mut a = Artifacts { summary: text, ..Default::default() };
    a.add("table2_summary.csv", csv);
    a.add("table2_apd_sweep.csv", results[0].1.to_csv());
    a.add("table2_emccd_sweep.csv", results[1].1.to_csv());
    Ok(a)
}
