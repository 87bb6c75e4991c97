//! EMCCD frame synthesis and single-ion region-of-interest handling.
//!
//! Noise chain per pixel: Poisson photoelectrons → Gamma electron
//! multiplication → ADU conversion, bias and Gaussian read noise → rounding
//! to unsigned 16-bit ADU.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::classify::{fit_threshold, ThresholdModel};
use crate::lm::{self, LmOptions, Problem};
use crate::rng::{self, domain};
use crate::{Error, Label, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    /// PSF centre in pixel coordinates; pixel `(i, j)` spans
    /// `[i − ½, i + ½] × [j − ½, j + ½]`.
    pub psf_center: (f64, f64),
    pub psf_sigma: f64,
    pub quantum_efficiency: f64,
    pub em_gain: f64,
    /// Read noise σ (ADU).
    pub read_noise_sigma: f64,
    pub bias: f64,
    pub adu_per_electron: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            width: 16,
            height: 16,
            psf_center: (7.3, 7.6),
            psf_sigma: 1.5,
            quantum_efficiency: 0.8,
            em_gain: 300.0,
            read_noise_sigma: 10.0,
            bias: 100.0,
            adu_per_electron: 0.1,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("frame dimensions must be ≥ 1"));
        }
        if !(self.psf_sigma > 0.0) {
            return Err(Error::config("psf_sigma must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::config("quantum_efficiency must lie in [0, 1]"));
        }
        if !(self.em_gain >= 1.0) {
            return Err(Error::config("em_gain must be ≥ 1"));
        }
        if !(self.read_noise_sigma >= 0.0 && self.adu_per_electron > 0.0) {
            return Err(Error::config("read noise must be ≥ 0 and ADU conversion > 0"));
        }
        if !self.bias.is_finite() || !self.psf_center.0.is_finite() || !self.psf_center.1.is_finite() {
            return Err(Error::config("bias and psf_center must be finite"));
        }
        Ok(())
    }

    /// PSF fraction collected by each pixel, row-major.
    pub fn psf_weights(&self) -> Vec<f64> {
        let axis = |n: usize, c: f64| -> Vec<f64> {
            let s = self.psf_sigma * std::f64::consts::SQRT_2;
            (0..n)
                .map(|i| 0.5 * (erf((i as f64 + 0.5 - c) / s) - erf((i as f64 - 0.5 - c) / s)))
                .collect()
        };
        let wx = axis(self.width, self.psf_center.0);
        let wy = axis(self.height, self.psf_center.1);
        wy.iter().flat_map(|&y| wx.iter().map(move |&x| x * y)).collect()
    }

    /// Mean bias-subtracted ADU summed over the frame.
    pub fn expected_signal(&self, photon_count: u64) -> f64 {
        let enclosed: f64 = self.psf_weights().iter().sum();
        photon_count as f64 * self.quantum_efficiency * enclosed * self.em_gain * self.adu_per_electron
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major ADU values.
    pub pixels: Vec<u16>,
    pub bias: f64,
    /// Exposure time (s); identified with the detection window.
    pub exposure: f64,
    pub photon_count: u64,
}

impl Frame {
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    /// Little-endian row-major `u16` dump.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, sidecar: &FrameSidecar) -> Result<Self> {
        let n = sidecar.width * sidecar.height;
        let mut buf = vec![0u8; 2 * n];
        r.read_exact(&mut buf)?;
        Ok(Frame {
            width: sidecar.width,
            height: sidecar.height,
            pixels: buf.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect(),
            bias: sidecar.spec.bias,
            exposure: sidecar.exposure,
            photon_count: sidecar.photon_count,
        })
    }

    pub fn sidecar(&self, spec: &FrameSpec) -> FrameSidecar {
        FrameSidecar {
            width: self.width,
            height: self.height,
            exposure: self.exposure,
            photon_count: self.photon_count,
            spec: spec.clone(),
        }
    }
}

/// JSON metadata accompanying a binary frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub width: usize,
    pub height: usize,
    pub exposure: f64,
    pub photon_count: u64,
    pub spec: FrameSpec,
}

fn render_with<R: Rng>(photon_count: u64, spec: &FrameSpec, weights: &[f64], rng: &mut R) -> Vec<u16> {
    let read = (spec.read_noise_sigma > 0.0).then(|| Normal::new(0.0, spec.read_noise_sigma).unwrap());
    let scale = photon_count as f64 * spec.quantum_efficiency;
    weights
        .iter()
        .map(|&w| {
            let mu = scale * w;
            let electrons = if mu > 0.0 { Poisson::new(mu).unwrap().sample(rng) } else { 0.0 };
            let amplified = if electrons > 0.0 {
                Gamma::new(electrons, spec.em_gain).unwrap().sample(rng)
            } else {
                0.0
            };
            let noise = read.map_or(0.0, |d| d.sample(rng));
            let adu = amplified * spec.adu_per_electron + spec.bias + noise;
            adu.round().clamp(0.0, u16::MAX as f64) as u16
        })
        .collect()
}

/// Renders one frame for `photon_count` detected photons.
pub fn render_frame(photon_count: u64, spec: &FrameSpec, seed: u64) -> Frame {
    let weights = spec.psf_weights();
    let mut rng = rng::from_seed(seed);
    Frame {
        width: spec.width,
        height: spec.height,
        pixels: render_with(photon_count, spec, &weights, &mut rng),
        bias: spec.bias,
        exposure: 0.0,
        photon_count,
    }
}

/// Renders one frame per entry of `photon_counts`; frame `i` uses the seed
/// derived from `(seed, i)` so output is independent of scheduling.
pub fn render_stack(photon_counts: &[u64], spec: &FrameSpec, exposure: f64, seed: u64) -> Vec<Frame> {
    let weights = spec.psf_weights();
    photon_counts
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut rng = rng::stream(seed, domain::FRAME, i as u64);
            Frame {
                width: spec.width,
                height: spec.height,
                pixels: render_with(n, spec, &weights, &mut rng),
                bias: spec.bias,
                exposure,
                photon_count: n,
            }
        })
        .collect()
}

/// Square pixel window around a located ion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub center: (f64, f64),
    pub sigma: f64,
    pub x0: usize,
    pub y0: usize,
    /// Exclusive upper bounds.
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    /// Window of side ⌈6σ⌉ centred on `center`, clipped to the frame.
    pub fn around(center: (f64, f64), sigma: f64, width: usize, height: usize) -> Result<Self> {
        if !(sigma > 0.0) || !center.0.is_finite() || !center.1.is_finite() {
            return Err(Error::domain("ROI needs a finite centre and σ > 0"));
        }
        let side = (6.0 * sigma).ceil() as i64;
        let span = |c: f64, n: usize| -> (usize, usize) {
            let lo = (c - (side - 1) as f64 / 2.0).round() as i64;
            let hi = lo + side;
            (lo.clamp(0, n as i64) as usize, hi.clamp(0, n as i64) as usize)
        };
        let (x0, x1) = span(center.0, width);
        let (y0, y1) = span(center.1, height);
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::NoIonLocated);
        }
        Ok(Roi { center, sigma, x0, y0, x1, y1 })
    }

    pub fn len(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, frame: &Frame) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= frame.width && self.y1 <= frame.height
    }

    /// Bias-subtracted pixel values, row-major within the window.
    pub fn pixels(&self, frame: &Frame) -> Result<Vec<f64>> {
        if !self.fits(frame) {
            return Err(Error::domain("ROI lies outside the frame"));
        }
        Ok((self.y0..self.y1)
            .flat_map(|y| (self.x0..self.x1).map(move |x| (x, y)))
            .map(|(x, y)| frame.get(x, y) as f64 - frame.bias)
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Feature vector handed to the pixel classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Bias-subtracted ROI pixels only.
    Raw,
    /// Raw pixels, cumulative hot-pixel sums for every `n_hot`, and the
    /// PSF-weighted ROI sum.
    #[default]
    Augmented,
}

impl Roi {
    /// Normalized Gaussian weights of the fitted PSF over the window.
    pub fn psf_weights(&self) -> Vec<f64> {
        let w: Vec<f64> = (self.y0..self.y1)
            .flat_map(|y| (self.x0..self.x1).map(move |x| (x as f64, y as f64)))
            .map(|(x, y)| {
                let r2 = (x - self.center.0).powi(2) + (y - self.center.1).powi(2);
                (-0.5 * r2 / (self.sigma * self.sigma)).exp()
            })
            .collect();
        let norm: f64 = w.iter().sum();
        w.into_iter().map(|v| v / norm).collect()
    }

    pub fn features(&self, frame: &Frame, set: FeatureSet) -> Result<Vec<f64>> {
        let px = self.pixels(frame)?;
        if set == FeatureSet::Raw {
            return Ok(px);
        }
        let weighted: f64 = px.iter().zip(self.psf_weights()).map(|(p, w)| p * w).sum();
        let mut sorted = px.clone();
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut out = px;
        let mut acc = 0.0;
        out.extend(sorted.iter().map(|v| {
            acc += v;
            acc
        }));
        out.push(weighted);
        Ok(out)
    }
}

/// Sum of the `n_hot` largest bias-subtracted pixels in the ROI.
pub fn roi_counts(frame: &Frame, roi: &Roi, n_hot: usize) -> Result<f64> {
    let mut px = roi.pixels(frame)?;
    hot_sum(&mut px, n_hot)
}

fn hot_sum(px: &mut [f64], n_hot: usize) -> Result<f64> {
    if n_hot == 0 || n_hot > px.len() {
        return Err(Error::domain(format!("n_hot must lie in [1, {}], got {n_hot}", px.len())));
    }
    px.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(px[..n_hot].iter().sum())
}

/// Isotropic 2D Gaussian on a constant: p = [offset, amplitude, cx, cy, σ].
struct Spot<'a> {
    width: usize,
    z: &'a [f64],
}

impl Spot<'_> {
    fn xy(&self, i: usize) -> (f64, f64) {
        ((i % self.width) as f64, (i / self.width) as f64)
    }
}

impl Problem for Spot<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.z.len(),
            self.z.iter().enumerate().map(|(i, &z)| {
                let (x, y) = self.xy(i);
                let r2 = (x - p[2]).powi(2) + (y - p[3]).powi(2);
                p[0] + p[1] * (-0.5 * r2 / (p[4] * p[4])).exp() - z
            }),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.z.len(), 5);
        for i in 0..self.z.len() {
            let (x, y) = self.xy(i);
            let (dx, dy) = (x - p[2], y - p[3]);
            let s2 = p[4] * p[4];
            let g = (-0.5 * (dx * dx + dy * dy) / s2).exp();
            j[(i, 0)] = 1.0;
            j[(i, 1)] = g;
            j[(i, 2)] = p[1] * g * dx / s2;
            j[(i, 3)] = p[1] * g * dy / s2;
            j[(i, 4)] = p[1] * g * (dx * dx + dy * dy) / (s2 * p[4]);
        }
        j
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Minimum peak prominence, in robust noise units of the mean image, for an
/// ion to count as located.
const MIN_PROMINENCE: f64 = 6.0;

/// Locates the ion by a least-squares 2D Gaussian fit to the mean of the
/// calibration frames.
pub fn fit_roi(frames: &[Frame]) -> Result<Roi> {
    let first = frames.first().ok_or(Error::NoIonLocated)?;
    let (w, h) = (first.width, first.height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::domain("calibration frames differ in size"));
    }
    let mut mean = vec![0.0; w * h];
    for f in frames {
        for (m, &p) in mean.iter_mut().zip(&f.pixels) {
            *m += p as f64;
        }
    }
    let n = frames.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let mut sorted = mean.clone();
    let base = median(&mut sorted);
    let mut dev: Vec<f64> = mean.iter().map(|m| (m - base).abs()).collect();
    let noise = (1.4826 * median(&mut dev)).max(1e-9);
    let (peak_i, &peak) = mean
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoIonLocated)?;
    let amp = peak - base;
    if !(amp > MIN_PROMINENCE * noise) {
        return Err(Error::NoIonLocated);
    }

    // Normalized image; start from the brightest pixel.
    let z: Vec<f64> = mean.iter().map(|m| (m - base) / amp).collect();
    let p0 = [0.0, 1.0, (peak_i % w) as f64, (peak_i / w) as f64, 1.5];
    let spot = Spot { width: w, z: &z };
    let fit = lm::minimize(&spot, &p0, &LmOptions::default()).map_err(|_| Error::NoIonLocated)?;
    let p = &fit.params;
    let (cx, cy, sigma) = (p[2], p[3], p[4].abs());
    let inside = (-0.5..=w as f64 - 0.5).contains(&cx) && (-0.5..=h as f64 - 0.5).contains(&cy);
    if !(p[1] > 0.0) || !inside || !(sigma > 0.1) || sigma > w.max(h) as f64 {
        return Err(Error::NoIonLocated);
    }
    Roi::around((cx, cy), sigma, w, h)
}

/// Chooses the hot-pixel count that minimizes the calibration error of a
/// threshold on the hot-pixel sum; ties go to the larger class separation d′.
pub fn select_n_hot(frames: &[Frame], labels: &[Label], roi: &Roi) -> Result<(usize, ThresholdModel)> {
    if frames.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: frames.len() });
    }
    let sorted: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut px = roi.pixels(f)?;
            px.sort_unstable_by(|a, b| b.total_cmp(a));
            Ok(px)
        })
        .collect::<Result<_>>()?;
    let mut sums = vec![0.0; frames.len()];
    let mut best: Option<(usize, ThresholdModel, f64)> = None;
    for n_hot in 1..=roi.len() {
        for (s, px) in sums.iter_mut().zip(&sorted) {
            *s += px[n_hot - 1];
        }
        let model = fit_threshold(&sums, labels)?;
        let sep = separation(&sums, labels);
        let better = best.as_ref().is_none_or(|(_, b, bs)| {
            model.calibration_error < b.calibration_error
                || (model.calibration_error == b.calibration_error && sep > *bs)
        });
        if better {
            best = Some((n_hot, model, sep));
        }
    }
    best.map(|(n, m, _)| (n, m)).ok_or(Error::NoIonLocated)
}

/// d′ between the bright and dark distributions of `values`.
fn separation(values: &[f64], labels: &[Label]) -> f64 {
    let moments = |bright: bool| {
        let v: Vec<f64> = values
            .iter()
            .zip(labels)
            .filter(|(_, l)| l.is_bright() == bright)
            .map(|(&v, _)| v)
            .collect();
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
    };
    let (mb, vb) = moments(true);
    let (md, vd) = moments(false);
    let pooled = (0.5 * (vb + vd)).sqrt();
    if pooled > 0.0 { (mb - md) / pooled } else { f64::INFINITY }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_noiseless_frame_is_zero() {
        let spec = FrameSpec { read_noise_sigma: 0.0, bias: 0.0, ..FrameSpec::default() };
        let f = render_frame(0, &spec, 3);
        assert!(f.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn weights_integrate_to_one_for_centred_psf() {
        let spec = FrameSpec { width: 40, height: 40, psf_center: (19.5, 20.2), ..Default::default() };
        let s: f64 = spec.psf_weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = FrameSpec::default();
        assert_eq!(render_frame(50, &spec, 11), render_frame(50, &spec, 11));
        assert_ne!(render_frame(50, &spec, 11), render_frame(50, &spec, 12));
    }

    fn single_pixel_frame(v: u16) -> Frame {
        let mut pixels = vec![100; 64];
        pixels[3 * 8 + 4] = 100 + v;
        Frame { width: 8, height: 8, pixels, bias: 100.0, exposure: 0.0, photon_count: 0 }
    }

    #[test]
    fn hot_pixel_sums() {
        let f = single_pixel_frame(37);
        let roi = Roi::around((4.0, 3.0), 0.5, 8, 8).unwrap();
        assert_eq!(roi.len(), 9);
        assert_eq!(roi_counts(&f, &roi, 1).unwrap(), 37.0);
        assert_eq!(roi_counts(&f, &roi, roi.len()).unwrap(), 37.0);
        assert!(roi_counts(&f, &roi, 0).is_err());
        assert!(roi_counts(&f, &roi, 10).is_err());
        let outside = Roi { x1: 9, ..roi };
        assert!(matches!(roi_counts(&f, &outside, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn roi_is_clipped() {
        let roi = Roi::around((0.2, 15.0), 1.5, 16, 16).unwrap();
        assert_eq!((roi.x0, roi.y1), (0, 16));
        assert!(roi.x1 - roi.x0 < 9);
    }

    #[test]
    fn binary_roundtrip() {
        let spec = FrameSpec::default();
        let f = render_frame(80, &spec, 5);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 2 * 16 * 16);
        let side: FrameSidecar = serde_json::from_str(&serde_json::to_string(&f.sidecar(&spec)).unwrap()).unwrap();
        assert_eq!(Frame::read_binary(&buf[..], &side).unwrap(), f);
    }

    #[test]
    fn dark_stack_has_no_ion() {
        let spec = FrameSpec::default();
        let frames = render_stack(&vec![0; 200], &spec, 1e-3, 1);
        assert!(matches!(fit_roi(&frames), Err(Error::NoIonLocated)));
    }
}
