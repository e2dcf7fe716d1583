//! Heart and respiration rate estimation from a radar phase signal.
//!
//! The per-window chain is: zero-phase band-pass, spectral peak search
//! (zero-padded Hann periodogram or a MUSIC-style subspace pseudo-spectrum),
//! respiration-harmonic rejection for the heart band, then a 3-window median
//! over the sequence of windows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::PhaseSignal;

pub const RESP_BAND_HZ: (f64, f64) = (0.1, 0.5);
pub const HEART_BAND_HZ: (f64, f64) = (0.8, 2.0);
pub const HARMONIC_TOLERANCE_HZ: f64 = 0.02;
/// Respiration harmonics checked against heart candidates: 2nd through 8th.
pub const HARMONIC_RANGE: std::ops::RangeInclusive<u32> = 2..=8;
pub const DEFAULT_MODEL_ORDER: usize = 6;
pub const MIN_WINDOW_S: f64 = 10.0;

/// Plausible adult ranges; estimates outside are flagged, not rejected.
pub const HEART_RATE_RANGE_BPM: (f64, f64) = (48.0, 120.0);
pub const RESP_RATE_RANGE_RPM: (f64, f64) = (6.0, 30.0);

/// Candidates weaker than this fraction of the strongest peak are ignored
/// by harmonic disambiguation.
const CANDIDATE_FLOOR: f64 = 0.5;
const MAX_CANDIDATES: usize = 6;

// ── Estimates ──────────────────────────────────────────────────────────────

/// A spectral peak expressed as a per-minute rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_per_min: f64,
    pub peak_freq_hz: f64,
    /// In `[0, 1]`.
    pub confidence: f64,
    /// Set when every heart candidate coincided with a respiration harmonic.
    #[serde(default)]
    pub harmonic_suspect: bool,
}

impl RateEstimate {
    /// The only constructor; keeps `rate_per_min == 60 * peak_freq_hz`.
    pub fn from_freq(peak_freq_hz: f64, confidence: f64) -> Self {
        Self {
            rate_per_min: 60.0 * peak_freq_hz,
            peak_freq_hz,
            confidence: confidence.clamp(0.0, 1.0),
            harmonic_suspect: false,
        }
    }
}

/// Heart and respiration estimates for one analysis window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsEstimate {
    pub heart: RateEstimate,
    pub resp: RateEstimate,
    pub window_start_s: f64,
    pub window_end_s: f64,
}

impl VitalsEstimate {
    pub fn heart_out_of_band(&self) -> bool {
        let (lo, hi) = HEART_RATE_RANGE_BPM;
        !(lo..=hi).contains(&self.heart.rate_per_min)
    }

    pub fn resp_out_of_band(&self) -> bool {
        let (lo, hi) = RESP_RATE_RANGE_RPM;
        !(lo..=hi).contains(&self.resp.rate_per_min)
    }

    /// Builds an estimate directly from rates, e.g. for scripted sessions.
    pub fn from_rates(hr_bpm: f64, rr_rpm: f64, window_start_s: f64, window_end_s: f64) -> Self {
        Self {
            heart: RateEstimate::from_freq(hr_bpm / 60.0, 1.0),
            resp: RateEstimate::from_freq(rr_rpm / 60.0, 1.0),
            window_start_s,
            window_end_s,
        }
    }

    pub fn to_line(&self) -> VitalsLine {
        VitalsLine {
            t0: self.window_start_s,
            t1: self.window_end_s,
            hr_bpm: self.heart.rate_per_min,
            rr_rpm: self.resp.rate_per_min,
            hr_conf: self.heart.confidence,
            rr_conf: self.resp.confidence,
        }
    }
}

/// JSON-lines record emitted by the `vitals` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsLine {
    pub t0: f64,
    pub t1: f64,
    pub hr_bpm: f64,
    pub rr_rpm: f64,
    pub hr_conf: f64,
    pub rr_conf: f64,
}

impl From<VitalsLine> for VitalsEstimate {
    fn from(line: VitalsLine) -> Self {
        Self {
            heart: RateEstimate::from_freq(line.hr_bpm / 60.0, line.hr_conf),
            resp: RateEstimate::from_freq(line.rr_rpm / 60.0, line.rr_conf),
            window_start_s: line.t0,
            window_end_s: line.t1,
        }
    }
}

// ── Band-pass ──────────────────────────────────────────────────────────────

/// Second-order section in transposed direct form II, normalized `a0 = 1`.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

/// Q factors of the two sections of a 4th-order Butterworth prototype.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

impl Biquad {
    fn lowpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters in place, starting from the steady state for a constant input
    /// equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&u) = x.first() else { return };
        let g = self.dc_gain();
        let mut z1 = (g - self.b[0]) * u;
        let mut z2 = (self.b[2] - self.a[1] * g) * u;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

fn butterworth_bandpass(low_hz: f64, high_hz: f64, fs: f64) -> Vec<Biquad> {
    BUTTER4_Q
        .iter()
        .map(|&q| Biquad::highpass(low_hz, fs, q))
        .chain(BUTTER4_Q.iter().map(|&q| Biquad::lowpass(high_hz, fs, q)))
        .collect()
}

/// Forward-backward filtering with odd-symmetric edge extension.
fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut buf = Vec::with_capacity(n + 2 * pad);
    buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    buf.extend_from_slice(x);
    buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    for s in sections {
        s.run(&mut buf);
    }
    buf.reverse();
    for s in sections {
        s.run(&mut buf);
    }
    buf.reverse();
    buf[pad..pad + n].to_vec()
}

fn check_band(low_hz: f64, high_hz: f64, fs: f64) -> Result<()> {
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::invalid(format!(
            "band [{low_hz}, {high_hz}] Hz invalid for sample rate {fs} Hz"
        )));
    }
    Ok(())
}

/// Zero-phase 4th-order Butterworth band-pass (8th order after the
/// backward pass). One octave outside either edge is attenuated by more
/// than 40 dB.
pub fn bandpass(signal: &PhaseSignal, low_hz: f64, high_hz: f64) -> Result<PhaseSignal> {
    let fs = signal.sample_rate_hz;
    check_band(low_hz, high_hz, fs)?;
    let sections = butterworth_bandpass(low_hz, high_hz, fs);
    // Three periods of the low edge covers the high-pass transient.
    let pad = (3.0 * fs / low_hz).ceil() as usize;
    Ok(signal.with_samples(filtfilt(&sections, &signal.samples, pad)))
}

// ── Periodogram ────────────────────────────────────────────────────────────

/// Zero-padded Hann periodogram restricted to a band.
struct Periodogram {
    freqs: Vec<f64>,
    power: Vec<f64>,
    /// Main-lobe half width of the window, in Hz.
    lobe_hz: f64,
}

fn periodogram(x: &[f64], fs: f64, low_hz: f64, high_hz: f64) -> Periodogram {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let nfft = (n.next_power_of_two() * 8).max(16_384);
    let denom = (n.max(2) - 1) as f64;
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / denom).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let df = fs / nfft as f64;
    let k_lo = (low_hz / df).ceil() as usize;
    let k_hi = ((high_hz / df).floor() as usize).min(nfft / 2);
    // Keep one guard bin on each side so edge bins can be tested for maxima.
    let start = k_lo.saturating_sub(1);
    let end = (k_hi + 1).min(nfft / 2);
    let freqs = (start..=end).map(|k| k as f64 * df).collect();
    let power = (start..=end).map(|k| buf[k].norm_sqr()).collect();
    Periodogram {
        freqs,
        power,
        lobe_hz: 2.0 * fs / n as f64,
    }
}

impl Periodogram {
    fn in_band(&self, i: usize, low_hz: f64, high_hz: f64) -> bool {
        let f = self.freqs[i];
        f >= low_hz - 1e-12 && f <= high_hz + 1e-12
    }

    fn band_power(&self, low_hz: f64, high_hz: f64) -> f64 {
        (0..self.freqs.len())
            .filter(|&i| self.in_band(i, low_hz, high_hz))
            .map(|i| self.power[i])
            .sum()
    }

    /// Local maxima inside the band as `(refined freq, peak power, lobe power)`.
    fn peaks(&self, low_hz: f64, high_hz: f64) -> Vec<(f64, f64, f64)> {
        let p = &self.power;
        let mut idx: Vec<usize> = (1..p.len().saturating_sub(1))
            .filter(|&i| self.in_band(i, low_hz, high_hz) && p[i] > p[i - 1] && p[i] >= p[i + 1])
            .collect();
        if idx.is_empty() {
            // Monotone spectrum: fall back to the largest in-band bin.
            if let Some(i) = (0..p.len())
                .filter(|&i| self.in_band(i, low_hz, high_hz))
                .max_by(|&a, &b| p[a].total_cmp(&p[b]))
            {
                idx.push(i);
            }
        }
        idx.into_iter()
            .filter(|&i| p[i] > 0.0)
            .map(|i| {
                let f = if i > 0 && i + 1 < p.len() && p[i - 1] > 0.0 && p[i + 1] > 0.0 {
                    let df = self.freqs[1] - self.freqs[0];
                    self.freqs[i] + df * parabolic_offset(p[i - 1].ln(), p[i].ln(), p[i + 1].ln())
                } else {
                    self.freqs[i]
                };
                let lobe: f64 = (0..p.len())
                    .filter(|&j| self.in_band(j, low_hz, high_hz) && (self.freqs[j] - f).abs() <= self.lobe_hz)
                    .map(|j| p[j])
                    .sum();
                (f.clamp(low_hz, high_hz), p[i], lobe)
            })
            .collect()
    }
}

/// Vertex offset in bins of the parabola through three equally spaced points.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::EPSILON {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

fn require_window(signal: &PhaseSignal) -> Result<()> {
    if signal.duration_s() < MIN_WINDOW_S - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "window of {:.2} s is shorter than {MIN_WINDOW_S} s",
            signal.duration_s()
        )));
    }
    Ok(())
}

/// Spectral peaks in the band, strongest first.
///
/// Each candidate's confidence is the power inside the window main lobe
/// around the peak divided by the total in-band power.
pub fn periodogram_candidates(signal: &PhaseSignal, low_hz: f64, high_hz: f64) -> Result<Vec<RateEstimate>> {
    require_window(signal)?;
    let fs = signal.sample_rate_hz;
    check_band(low_hz, high_hz, fs)?;
    if signal.samples.iter().all(|&v| v == signal.samples[0]) {
        return Err(Error::NoPeak("signal is constant".into()));
    }
    let pg = periodogram(&signal.samples, fs, low_hz, high_hz);
    let total = pg.band_power(low_hz, high_hz);
    if !(total > 0.0) {
        return Err(Error::NoPeak(format!("no power in [{low_hz}, {high_hz}] Hz")));
    }
    let mut peaks = pg.peaks(low_hz, high_hz);
    if peaks.is_empty() {
        return Err(Error::NoPeak(format!("no peak in [{low_hz}, {high_hz}] Hz")));
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(peaks
        .into_iter()
        .map(|(f, _, lobe)| RateEstimate::from_freq(f, lobe / total))
        .collect())
}

/// Strongest periodogram peak in the band, refined by parabolic
/// interpolation of the log power.
pub fn estimate_rate_periodogram(signal: &PhaseSignal, search_low_hz: f64, search_high_hz: f64) -> Result<RateEstimate> {
    periodogram_candidates(signal, search_low_hz, search_high_hz).map(|c| c[0])
}

// ── Subspace (MUSIC) ───────────────────────────────────────────────────────

/// MUSIC pseudo-spectrum sampled on a frequency grid.
#[derive(Debug, Clone)]
pub struct PseudoSpectrum {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<f64>,
    /// Fraction of correlation energy captured by the signal subspace.
    pub signal_fraction: f64,
    /// Refined peak frequencies with their DFT power, strongest power first.
    pub peaks: Vec<(f64, f64)>,
}

const MAX_CORRELATION_DIM: usize = 200;

/// Computes the MUSIC pseudo-spectrum of `signal` over the search band.
///
/// The signal is band-limited around the search band and decimated, a
/// forward-backward averaged correlation matrix is formed from sliding
/// snapshots, and the `model_order` dominant eigenvectors span the signal
/// subspace. The pseudo-spectrum is `1 / |P_noise a(f)|²`.
pub fn subspace_spectrum(
    signal: &PhaseSignal,
    model_order: usize,
    search_low_hz: f64,
    search_high_hz: f64,
) -> Result<PseudoSpectrum> {
    if model_order < 2 {
        return Err(Error::invalid(format!("model order must be at least 2, got {model_order}")));
    }
    if signal.len() < 4 * model_order {
        return Err(Error::InsufficientData(format!(
            "{} samples is fewer than 4x model order {model_order}",
            signal.len()
        )));
    }
    let fs = signal.sample_rate_hz;
    check_band(search_low_hz, search_high_hz, fs)?;

    let lo_edge = search_low_hz * 0.5;
    let hi_edge = (search_high_hz * 1.5).min(0.45 * fs);
    let filtered = bandpass(signal, lo_edge, hi_edge)?;
    let mut decim = ((fs / (5.0 * hi_edge)).floor() as usize).max(1);
    while decim > 1 && signal.len() / decim < 4 * model_order {
        decim -= 1;
    }
    let y: Vec<f64> = filtered.samples.iter().step_by(decim).copied().collect();
    let fs_d = fs / decim as f64;

    let m = (y.len() / 2).clamp(model_order + 2, MAX_CORRELATION_DIM);
    if y.len() < m + 1 {
        return Err(Error::InsufficientData("too few samples for the correlation matrix".into()));
    }
    let corr = correlation_matrix(&y, m);
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let trace: f64 = lambda.iter().map(|l| l.max(0.0)).sum();
    if !(lambda[0].is_finite() && lambda[0] > 1e-300) {
        return Err(Error::DegenerateSignal("correlation matrix is zero".into()));
    }
    if lambda[1] <= 1e-12 * lambda[0] {
        return Err(Error::DegenerateSignal("correlation matrix has rank below 2".into()));
    }
    let p = model_order.min(m - 1);
    let signal_fraction = (lambda[..p].iter().map(|l| l.max(0.0)).sum::<f64>() / trace).clamp(0.0, 1.0);
    let basis: Vec<Vec<f64>> = order[..p]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();

    let step = (0.001f64).min((search_high_hz - search_low_hz) / 500.0);
    let count = ((search_high_hz - search_low_hz) / step).floor() as usize + 1;
    let freqs_hz: Vec<f64> = (0..count).map(|i| search_low_hz + i as f64 * step).collect();
    let eval = |f: f64| -> f64 {
        let w = 2.0 * PI * f / fs_d;
        let (cos, sin): (Vec<f64>, Vec<f64>) = (0..m).map(|i| ((w * i as f64).cos(), (w * i as f64).sin())).unzip();
        let captured: f64 = basis
            .iter()
            .map(|e| {
                let re: f64 = e.iter().zip(&cos).map(|(a, b)| a * b).sum();
                let im: f64 = e.iter().zip(&sin).map(|(a, b)| a * b).sum();
                re * re + im * im
            })
            .sum();
        1.0 / (m as f64 - captured).max(1e-12 * m as f64)
    };
    let values: Vec<f64> = freqs_hz.iter().map(|&f| eval(f)).collect();

    let mut peaks: Vec<(f64, f64)> = (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .map(|i| {
            let off = parabolic_offset(values[i - 1].ln(), values[i].ln(), values[i + 1].ln());
            let f = freqs_hz[i] + off * step;
            (f, dft_power(&y, fs_d, f))
        })
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(PseudoSpectrum {
        freqs_hz,
        values,
        signal_fraction,
        peaks,
    })
}

fn correlation_matrix(y: &[f64], m: usize) -> DMatrix<f64> {
    let snapshots = y.len() - m + 1;
    let mut r = DMatrix::<f64>::zeros(m, m);
    for k in 0..snapshots {
        let s = &y[k..k + m];
        for i in 0..m {
            let si = s[i];
            for j in i..m {
                r[(i, j)] += si * s[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            r[(i, j)] = r[(j, i)];
        }
    }
    // Forward-backward averaging: R <- (R + J R J) / 2.
    let fb = DMatrix::from_fn(m, m, |i, j| 0.5 * (r[(i, j)] + r[(m - 1 - i, m - 1 - j)]));
    fb / snapshots as f64
}

fn dft_power(y: &[f64], fs: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let (s, c) = (w * i as f64).sin_cos();
        re += v * c;
        im -= v * s;
    }
    (re * re + im * im) / y.len() as f64
}

/// Subspace candidates, strongest DFT power first. Confidence is the
/// signal-subspace energy fraction shared out by relative peak power.
pub fn subspace_candidates(
    signal: &PhaseSignal,
    model_order: usize,
    low_hz: f64,
    high_hz: f64,
) -> Result<Vec<RateEstimate>> {
    let spec = subspace_spectrum(signal, model_order, low_hz, high_hz)?;
    if spec.peaks.is_empty() {
        return Err(Error::NoPeak(format!("no pseudo-spectrum peak in [{low_hz}, {high_hz}] Hz")));
    }
    let total: f64 = spec.peaks.iter().map(|p| p.1).sum();
    Ok(spec
        .peaks
        .iter()
        .map(|&(f, pw)| {
            let share = if total > 0.0 { pw / total } else { 0.0 };
            RateEstimate::from_freq(f, spec.signal_fraction * share)
        })
        .collect())
}

/// Highest-power pseudo-spectrum peak in the band.
pub fn estimate_rate_subspace(
    signal: &PhaseSignal,
    model_order: usize,
    search_low_hz: f64,
    search_high_hz: f64,
) -> Result<RateEstimate> {
    subspace_candidates(signal, model_order, search_low_hz, search_high_hz).map(|c| c[0])
}

// ── Harmonic disambiguation ────────────────────────────────────────────────

/// True if `freq_hz` lies within `tolerance_hz` of the 2nd–8th multiple of
/// the respiration frequency.
pub fn is_resp_harmonic(freq_hz: f64, resp_freq_hz: f64, tolerance_hz: f64) -> bool {
    HARMONIC_RANGE.clone().any(|k| (freq_hz - k as f64 * resp_freq_hz).abs() <= tolerance_hz)
}

/// Picks the strongest heart candidate that is not a respiration harmonic.
///
/// `candidates` must be sorted strongest first. When every candidate is a
/// harmonic the strongest is returned with halved confidence and
/// `harmonic_suspect` set.
pub fn disambiguate_heart(candidates: &[RateEstimate], resp: &RateEstimate, tolerance_hz: f64) -> Result<RateEstimate> {
    let strongest = candidates
        .first()
        .ok_or_else(|| Error::NoPeak("no heart candidates".into()))?;
    if let Some(c) = candidates
        .iter()
        .find(|c| !is_resp_harmonic(c.peak_freq_hz, resp.peak_freq_hz, tolerance_hz))
    {
        return Ok(*c);
    }
    let mut flagged = *strongest;
    flagged.confidence *= 0.5;
    flagged.harmonic_suspect = true;
    Ok(flagged)
}

// ── Tracking ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    Periodogram,
    Subspace { model_order: usize },
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Periodogram
    }
}

impl Estimator {
    pub fn candidates(&self, signal: &PhaseSignal, low_hz: f64, high_hz: f64) -> Result<Vec<RateEstimate>> {
        match *self {
            Estimator::Periodogram => periodogram_candidates(signal, low_hz, high_hz),
            Estimator::Subspace { model_order } => subspace_candidates(signal, model_order, low_hz, high_hz),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub estimator: Estimator,
    pub resp_band_hz: (f64, f64),
    pub heart_band_hz: (f64, f64),
    pub harmonic_tolerance_hz: f64,
}

impl TrackerConfig {
    pub fn new(window_s: f64, hop_s: f64) -> Self {
        Self {
            window_s,
            hop_s,
            ..Self::default()
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            hop_s: 5.0,
            estimator: Estimator::Periodogram,
            resp_band_hz: RESP_BAND_HZ,
            heart_band_hz: HEART_BAND_HZ,
            harmonic_tolerance_hz: HARMONIC_TOLERANCE_HZ,
        }
    }
}

/// Number of windows [`track_vitals`] produces for a signal.
pub fn window_count(duration_s: f64, window_s: f64, hop_s: f64) -> usize {
    if duration_s + 1e-9 < window_s {
        0
    } else {
        ((duration_s - window_s) / hop_s + 1e-9).floor() as usize + 1
    }
}

/// Estimates vitals for one window: band-pass, peak search per band and
/// heart harmonic rejection.
pub fn estimate_window(window: &PhaseSignal, config: &TrackerConfig, start_s: f64) -> Result<VitalsEstimate> {
    let (r_lo, r_hi) = config.resp_band_hz;
    let (h_lo, h_hi) = config.heart_band_hz;
    let resp_sig = bandpass(window, r_lo, r_hi)?;
    let resp = config.estimator.candidates(&resp_sig, r_lo, r_hi)?[0];
    let heart_sig = bandpass(window, h_lo, h_hi)?;
    let candidates = config.estimator.candidates(&heart_sig, h_lo, h_hi)?;
    let floor = candidates[0].confidence * CANDIDATE_FLOOR;
    let strong: Vec<RateEstimate> = candidates
        .into_iter()
        .take(MAX_CANDIDATES)
        .filter(|c| c.confidence >= floor)
        .collect();
    let heart = disambiguate_heart(&strong, &resp, config.harmonic_tolerance_hz)?;
    Ok(VitalsEstimate {
        heart,
        resp,
        window_start_s: start_s,
        window_end_s: start_s + window.duration_s(),
    })
}

/// Sliding-window vitals with a 3-window median on both rates.
///
/// Output length is `floor((duration - window) / hop) + 1`.
pub fn track_vitals(signal: &PhaseSignal, window_s: f64, hop_s: f64) -> Result<Vec<VitalsEstimate>> {
    track_vitals_with(signal, &TrackerConfig::new(window_s, hop_s))
}

pub fn track_vitals_with(signal: &PhaseSignal, config: &TrackerConfig) -> Result<Vec<VitalsEstimate>> {
    if config.window_s < MIN_WINDOW_S {
        return Err(Error::invalid(format!("window must be at least {MIN_WINDOW_S} s")));
    }
    if !(config.hop_s > 0.0 && config.hop_s <= config.window_s) {
        return Err(Error::invalid("hop must be in (0, window]"));
    }
    let fs = signal.sample_rate_hz;
    let count = window_count(signal.duration_s(), config.window_s, config.hop_s);
    if count == 0 {
        return Err(Error::InsufficientData(format!(
            "signal of {:.2} s is shorter than one {} s window",
            signal.duration_s(),
            config.window_s
        )));
    }
    let win_n = ((config.window_s * fs).round() as usize).min(signal.len());
    let raw = (0..count)
        .map(|i| {
            let start = ((i as f64 * config.hop_s * fs).round() as usize).min(signal.len() - win_n);
            estimate_window(&signal.slice(start, win_n), config, start as f64 / fs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(median_smooth(&raw))
}

/// Median over each window and its neighbours. Edge windows use the three
/// nearest windows so a single outlier anywhere is removed.
pub fn median_smooth(raw: &[VitalsEstimate]) -> Vec<VitalsEstimate> {
    if raw.len() < 3 {
        return raw.to_vec();
    }
    (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(1).min(raw.len() - 3);
            let trio = &raw[lo..lo + 3];
            VitalsEstimate {
                heart: median_of(trio.iter().map(|v| v.heart)),
                resp: median_of(trio.iter().map(|v| v.resp)),
                ..raw[i]
            }
        })
        .collect()
}

fn median_of(items: impl Iterator<Item = RateEstimate>) -> RateEstimate {
    let mut v: Vec<RateEstimate> = items.collect();
    v.sort_by(|a, b| a.peak_freq_hz.total_cmp(&b.peak_freq_hz));
    v[v.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::{corrupt, simulate_phase, VitalsGroundTruth};

    fn tone(f: f64, amp: f64, secs: f64, fs: f64) -> PhaseSignal {
        let n = (secs * fs).round() as usize;
        let s = (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs + 0.3).sin()).collect();
        PhaseSignal::new(s, fs, 5.0).unwrap()
    }

    /// Direct DFT amplitude over the central half of the signal.
    fn centre_amplitude(x: &[f64], fs: f64, f: f64) -> f64 {
        let n = x.len();
        let seg = &x[n / 4..3 * n / 4];
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in seg.iter().enumerate() {
            let w = 2.0 * PI * f * i as f64 / fs;
            re += v * w.cos();
            im -= v * w.sin();
        }
        2.0 * (re * re + im * im).sqrt() / seg.len() as f64
    }

    #[test]
    fn bandpass_passes_in_band_tone() {
        let s = tone(0.25, 1.0, 60.0, 100.0);
        let y = bandpass(&s, 0.1, 0.5).unwrap();
        assert_eq!(y.len(), s.len());
        let ratio = centre_amplitude(&y.samples, 100.0, 0.25) / centre_amplitude(&s.samples, 100.0, 0.25);
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn bandpass_rejects_out_of_band_tone() {
        let s = tone(1.2, 1.0, 60.0, 100.0);
        let y = bandpass(&s, 0.1, 0.5).unwrap();
        let db = 20.0 * (centre_amplitude(&y.samples, 100.0, 1.2) / centre_amplitude(&s.samples, 100.0, 1.2)).log10();
        assert!(db <= -20.0, "{db} dB");
    }

    #[test]
    fn bandpass_octave_attenuation() {
        // One octave below the low edge and above the high edge.
        for (f, band) in [(0.05, (0.1, 0.5)), (1.0, (0.1, 0.5)), (0.4, (0.8, 2.0)), (4.0, (0.8, 2.0))] {
            let s = tone(f, 1.0, 120.0, 100.0);
            let y = bandpass(&s, band.0, band.1).unwrap();
            let db = 20.0 * (centre_amplitude(&y.samples, 100.0, f) / centre_amplitude(&s.samples, 100.0, f)).log10();
            assert!(db <= -20.0, "{f} Hz through {band:?}: {db} dB");
        }
    }

    #[test]
    fn bandpass_zero_and_invalid() {
        let z = PhaseSignal::new(vec![0.0; 1000], 100.0, 5.0).unwrap();
        assert!(bandpass(&z, 0.1, 0.5).unwrap().samples.iter().all(|&v| v == 0.0));
        for (lo, hi) in [(0.0, 0.5), (0.5, 0.1), (0.1, 50.0), (-1.0, 2.0)] {
            assert!(matches!(bandpass(&z, lo, hi), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn periodogram_single_tones() {
        let r = estimate_rate_periodogram(&tone(0.25, 1.0, 30.0, 100.0), 0.1, 0.5).unwrap();
        assert!((r.rate_per_min - 15.0).abs() <= 0.5);
        assert!(r.confidence > 0.9);
        let h = estimate_rate_periodogram(&tone(1.2, 1.0, 30.0, 100.0), 0.8, 2.0).unwrap();
        assert!((h.rate_per_min - 72.0).abs() <= 1.0);
        assert_eq!(h.rate_per_min, 60.0 * h.peak_freq_hz);
    }

    #[test]
    fn periodogram_errors() {
        let z = PhaseSignal::new(vec![0.0; 3000], 100.0, 5.0).unwrap();
        assert!(matches!(estimate_rate_periodogram(&z, 0.1, 0.5), Err(Error::NoPeak(_))));
        let short = tone(1.0, 1.0, 5.0, 100.0);
        assert!(matches!(estimate_rate_periodogram(&short, 0.8, 2.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn periodogram_two_tone_default() {
        let s = simulate_phase(&VitalsGroundTruth::resting(), 30.0, 100.0, 5.0).unwrap();
        let r = estimate_rate_periodogram(&bandpass(&s, 0.1, 0.5).unwrap(), 0.1, 0.5).unwrap();
        let h = estimate_rate_periodogram(&bandpass(&s, 0.8, 2.0).unwrap(), 0.8, 2.0).unwrap();
        assert!((r.peak_freq_hz - 0.25).abs() < 0.005);
        assert!((h.peak_freq_hz - 1.2).abs() < 0.005);
    }

    #[test]
    fn subspace_single_tone() {
        let h = estimate_rate_subspace(&tone(1.2, 1.0, 30.0, 100.0), 6, 0.8, 2.0).unwrap();
        assert!((h.rate_per_min - 72.0).abs() <= 1.0, "{h:?}");
    }

    #[test]
    fn subspace_errors() {
        let z = PhaseSignal::new(vec![0.0; 3000], 100.0, 5.0).unwrap();
        assert!(matches!(estimate_rate_subspace(&z, 6, 0.8, 2.0), Err(Error::DegenerateSignal(_))));
        let s = tone(1.2, 1.0, 30.0, 100.0);
        assert!(matches!(estimate_rate_subspace(&s, 1, 0.8, 2.0), Err(Error::InvalidArgument(_))));
        let tiny = PhaseSignal::new(vec![1.0, -1.0, 1.0, -1.0, 1.0], 100.0, 5.0).unwrap();
        assert!(matches!(estimate_rate_subspace(&tiny, 2, 0.8, 2.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn harmonic_rejection_enumeration() {
        let resp = RateEstimate::from_freq(0.25, 0.9);
        let c = [RateEstimate::from_freq(1.25, 0.9), RateEstimate::from_freq(1.2, 0.7)];
        let picked = disambiguate_heart(&c, &resp, 0.02).unwrap();
        assert_eq!(picked.peak_freq_hz, 1.2);
        assert!(!picked.harmonic_suspect);

        let single = [RateEstimate::from_freq(1.2, 0.8)];
        assert_eq!(disambiguate_heart(&single, &resp, 0.02).unwrap(), single[0]);

        let all = [RateEstimate::from_freq(1.0, 0.8), RateEstimate::from_freq(1.5, 0.4)];
        let flagged = disambiguate_heart(&all, &resp, 0.02).unwrap();
        assert_eq!(flagged.peak_freq_hz, 1.0);
        assert!(flagged.harmonic_suspect);
        assert!((flagged.confidence - 0.4).abs() < 1e-12);

        assert!(matches!(disambiguate_heart(&[], &resp, 0.02), Err(Error::NoPeak(_))));
    }

    #[test]
    fn harmonic_set_is_second_to_eighth() {
        assert!(!is_resp_harmonic(0.25, 0.25, 0.02));
        assert!(is_resp_harmonic(0.5, 0.25, 0.02));
        assert!(is_resp_harmonic(2.0, 0.25, 0.02));
        assert!(!is_resp_harmonic(2.25, 0.25, 0.02));
    }

    #[test]
    fn tracking_length_and_accuracy() {
        let s = simulate_phase(&VitalsGroundTruth::resting(), 60.0, 100.0, 5.0).unwrap();
        let est = track_vitals(&s, 30.0, 5.0).unwrap();
        assert_eq!(est.len(), 7);
        for e in &est {
            assert!((e.resp.rate_per_min - 15.0).abs() <= 0.5, "{e:?}");
            assert!((e.heart.rate_per_min - 72.0).abs() <= 1.0, "{e:?}");
            assert!(e.window_end_s > e.window_start_s);
        }
    }

    #[test]
    fn tracking_errors() {
        let s = simulate_phase(&VitalsGroundTruth::resting(), 20.0, 100.0, 5.0).unwrap();
        assert!(matches!(track_vitals(&s, 30.0, 5.0), Err(Error::InsufficientData(_))));
        assert!(matches!(track_vitals(&s, 5.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(track_vitals(&s, 10.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(track_vitals(&s, 10.0, 11.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn median_removes_single_outlier() {
        for bad in 0..6 {
            let mut raw: Vec<VitalsEstimate> = (0..6)
                .map(|i| VitalsEstimate::from_rates(72.0, 15.0, i as f64 * 5.0, i as f64 * 5.0 + 30.0))
                .collect();
            raw[bad] = VitalsEstimate::from_rates(110.0, 28.0, raw[bad].window_start_s, raw[bad].window_end_s);
            for s in median_smooth(&raw) {
                assert_eq!(s.heart.rate_per_min, 72.0);
                assert_eq!(s.resp.rate_per_min, 15.0);
            }
        }
    }

    #[test]
    fn zero_db_default_subject_respiration() {
        let s = simulate_phase(&VitalsGroundTruth::resting(), 60.0, 100.0, 5.0).unwrap();
        let noisy = corrupt(&s, 0.0, 0.0, 3).unwrap();
        for e in track_vitals(&noisy, 30.0, 5.0).unwrap() {
            assert!((e.resp.rate_per_min - 15.0).abs() < 3.0);
        }
    }
}
