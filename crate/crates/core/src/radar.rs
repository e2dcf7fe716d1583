//! Synthetic chest motion and the radar phase it produces.
//!
//! Chest displacement is modelled as a respiration sinusoid plus a much
//! smaller heartbeat sinusoid, optionally with a second respiration harmonic.
//! The simulator emits the phase of the target range bin directly; range-FFT
//! and bin selection of a full chirp stack are not modelled.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Speed of light in mm/s.
const SPEED_OF_LIGHT_MM_S: f64 = 299_792_458_000.0;

/// Minimum sample rate: a 10x margin over the 2 Hz top of the heart band.
pub const MIN_SAMPLE_RATE_HZ: f64 = 20.0;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
pub const DEFAULT_DURATION_S: f64 = 30.0;

/// Amplitude of the optional respiration harmonic relative to the fundamental.
pub const RESP_HARMONIC_RATIO: f64 = 0.3;

/// Wavelength of a radar carrier, in mm.
pub fn wavelength_mm(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT_MM_S / carrier_hz
}

/// Wavelength of a 60 GHz carrier (~5 mm).
pub fn wavelength_60ghz_mm() -> f64 {
    wavelength_mm(60.0e9)
}

/// The true respiration and heartbeat the sensing chain should recover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsGroundTruth {
    pub resp_freq_hz: f64,
    pub heart_freq_hz: f64,
    pub resp_amp_mm: f64,
    pub heart_amp_mm: f64,
    pub resp_phase_rad: f64,
    pub heart_phase_rad: f64,
    /// Adds a term at twice the respiration frequency with
    /// [`RESP_HARMONIC_RATIO`] of its amplitude.
    #[serde(default)]
    pub resp_harmonic: bool,
}

impl VitalsGroundTruth {
    /// Validated constructor with zero initial phases and no harmonic.
    pub fn new(resp_freq_hz: f64, heart_freq_hz: f64, resp_amp_mm: f64, heart_amp_mm: f64) -> Result<Self> {
        let truth = Self {
            resp_freq_hz,
            heart_freq_hz,
            resp_amp_mm,
            heart_amp_mm,
            resp_phase_rad: 0.0,
            heart_phase_rad: 0.0,
            resp_harmonic: false,
        };
        truth.validate()?;
        Ok(truth)
    }

    /// Typical resting adult: 15 breaths/min, 72 beats/min, 4 mm / 0.2 mm.
    pub fn resting() -> Self {
        Self {
            resp_freq_hz: 0.25,
            heart_freq_hz: 1.2,
            resp_amp_mm: 4.0,
            heart_amp_mm: 0.2,
            resp_phase_rad: 0.0,
            heart_phase_rad: 0.0,
            resp_harmonic: false,
        }
    }

    pub fn with_phases(mut self, resp_phase_rad: f64, heart_phase_rad: f64) -> Self {
        self.resp_phase_rad = resp_phase_rad;
        self.heart_phase_rad = heart_phase_rad;
        self
    }

    pub fn with_resp_harmonic(mut self, enabled: bool) -> Self {
        self.resp_harmonic = enabled;
        self
    }

    pub fn resp_rate_per_min(&self) -> f64 {
        self.resp_freq_hz * 60.0
    }

    pub fn heart_rate_per_min(&self) -> f64 {
        self.heart_freq_hz * 60.0
    }

    /// Checks the physiological ranges and amplitude ordering.
    pub fn validate(&self) -> Result<()> {
        if !(0.1..=0.5).contains(&self.resp_freq_hz) {
            return Err(Error::invalid(format!(
                "respiration frequency {} Hz outside [0.1, 0.5]",
                self.resp_freq_hz
            )));
        }
        if !(0.8..=2.0).contains(&self.heart_freq_hz) {
            return Err(Error::invalid(format!(
                "heart frequency {} Hz outside [0.8, 2.0]",
                self.heart_freq_hz
            )));
        }
        if !(self.resp_amp_mm > 0.0 && self.heart_amp_mm > 0.0) {
            return Err(Error::invalid("amplitudes must be positive"));
        }
        if self.heart_amp_mm >= self.resp_amp_mm {
            return Err(Error::invalid("heart amplitude must be below respiration amplitude"));
        }
        Ok(())
    }

    /// Displacement in mm at time `t` seconds.
    pub fn displacement_at(&self, t: f64) -> f64 {
        let resp_arg = 2.0 * PI * self.resp_freq_hz * t + self.resp_phase_rad;
        let mut x = self.resp_amp_mm * resp_arg.sin()
            + self.heart_amp_mm * (2.0 * PI * self.heart_freq_hz * t + self.heart_phase_rad).sin();
        if self.resp_harmonic {
            x += RESP_HARMONIC_RATIO * self.resp_amp_mm * (2.0 * resp_arg).sin();
        }
        x
    }
}

/// Uniformly sampled chest displacement in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementTrace {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl DisplacementTrace {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// Uniformly sampled radar phase in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub wavelength_mm: f64,
}

impl PhaseSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, wavelength_mm: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("phase signal has no samples"));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(wavelength_mm > 0.0) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            wavelength_mm,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Copy of `[start, start + len)` as its own signal.
    pub fn slice(&self, start: usize, len: usize) -> PhaseSignal {
        PhaseSignal {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            wavelength_mm: self.wavelength_mm,
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> PhaseSignal {
        PhaseSignal {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            wavelength_mm: self.wavelength_mm,
        }
    }
}

/// Samples `truth` uniformly for `duration_s` seconds.
pub fn synth_displacement(truth: &VitalsGroundTruth, duration_s: f64, sample_rate_hz: f64) -> Result<DisplacementTrace> {
    if !(duration_s > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    if !(sample_rate_hz >= MIN_SAMPLE_RATE_HZ) {
        return Err(Error::invalid(format!(
            "sample rate must be at least {MIN_SAMPLE_RATE_HZ} Hz, got {sample_rate_hz}"
        )));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(Error::invalid("duration shorter than one sample"));
    }
    let samples = (0..n)
        .map(|i| truth.displacement_at(i as f64 / sample_rate_hz))
        .collect();
    Ok(DisplacementTrace {
        samples,
        sample_rate_hz,
    })
}

/// Phase of the reflected carrier: `4π x / λ`, element-wise.
pub fn displacement_to_phase(trace: &DisplacementTrace, wavelength_mm: f64) -> Result<PhaseSignal> {
    if !(wavelength_mm > 0.0) {
        return Err(Error::invalid(format!("wavelength must be positive, got {wavelength_mm}")));
    }
    let scale = 4.0 * PI / wavelength_mm;
    Ok(PhaseSignal {
        samples: trace.samples.iter().map(|x| scale * x).collect(),
        sample_rate_hz: trace.sample_rate_hz,
        wavelength_mm,
    })
}

/// Adds white Gaussian noise at `snr_db` plus a linear phase drift.
///
/// `snr_db = f64::INFINITY` disables the noise. Noise power is set from the
/// mean-square power of the input. Output is a pure function of the inputs
/// and `seed`.
pub fn corrupt(signal: &PhaseSignal, snr_db: f64, drift_rad_per_s: f64, seed: u64) -> Result<PhaseSignal> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot corrupt an empty signal"));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db is NaN"));
    }
    let mut samples = signal.samples.clone();
    if snr_db.is_finite() {
        let power = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = stream_rng(seed, 0);
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += sigma * z;
        }
    }
    if drift_rad_per_s != 0.0 {
        let dt = 1.0 / signal.sample_rate_hz;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += drift_rad_per_s * i as f64 * dt;
        }
    }
    Ok(signal.with_samples(samples))
}

/// Convenience: truth → displacement → phase (→ optional corruption).
pub fn simulate_phase(
    truth: &VitalsGroundTruth,
    duration_s: f64,
    sample_rate_hz: f64,
    wavelength_mm: f64,
) -> Result<PhaseSignal> {
    let trace = synth_displacement(truth, duration_s, sample_rate_hz)?;
    displacement_to_phase(&trace, wavelength_mm)
}

// ── CSV ────────────────────────────────────────────────────────────────────

/// Writes `t_s,value` rows, one per sample.
pub fn write_csv<W: Write>(samples: &[f64], sample_rate_hz: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "value"]).map_err(csv_err)?;
    for (i, v) in samples.iter().enumerate() {
        let t = i as f64 / sample_rate_hz;
        w.write_record([t.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t_s,value` CSV. The sample rate is inferred from the mean
/// timestamp spacing.
pub fn read_csv<R: Read>(input: R) -> Result<(Vec<f64>, f64)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "value" {
        return Err(Error::Format(format!(
            "expected header `t_s,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |idx: usize| -> Result<f64> {
            record[idx]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {}: {e}", line + 2)))
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData("trace needs at least two rows".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Format("timestamps must increase".into()));
    }
    let rate = (times.len() - 1) as f64 / span;
    Ok((values, rate))
}

/// Reads a phase CSV into a [`PhaseSignal`] with the given wavelength.
pub fn read_phase_csv<R: Read>(input: R, wavelength_mm: f64) -> Result<PhaseSignal> {
    let (samples, rate) = read_csv(input)?;
    // Round the inferred rate to the nearest 1e-6 Hz to undo decimal noise.
    let rate = (rate * 1e6).round() / 1e6;
    PhaseSignal::new(samples, rate, wavelength_mm)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct DFT magnitude at one frequency; independent of rustfft.
    fn dft_amplitude(x: &[f64], fs: f64, f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let w = 2.0 * PI * f * i as f64 / fs;
            re += v * w.cos();
            im -= v * w.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    #[test]
    fn displacement_peaks_at_truth() {
        let truth = VitalsGroundTruth::new(0.25, 1.2, 4.0, 0.2).unwrap();
        // 40 s holds a whole number of periods of both tones.
        let trace = synth_displacement(&truth, 40.0, 100.0).unwrap();
        assert_eq!(trace.samples.len(), 4000);
        // Scan the orthogonal bins up to 2.5 Hz; the two largest are the truth.
        let mut scan: Vec<(f64, f64)> = (1..=100)
            .map(|k| {
                let f = k as f64 * 0.025;
                (f, dft_amplitude(&trace.samples, 100.0, f))
            })
            .collect();
        scan.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        assert!((scan[0].0 - 0.25).abs() < 1e-9);
        assert!((scan[1].0 - 1.2).abs() < 1e-9);
        assert!((scan[0].1 - 4.0).abs() < 0.01);
        assert!((scan[1].1 - 0.2).abs() < 0.01);
    }

    #[test]
    fn zero_amplitude_gives_zero_trace() {
        let truth = VitalsGroundTruth {
            resp_amp_mm: 0.0,
            heart_amp_mm: 0.0,
            ..VitalsGroundTruth::resting()
        };
        let trace = synth_displacement(&truth, 10.0, 50.0).unwrap();
        assert!(trace.samples.iter().all(|&x| x == 0.0));
        assert!(truth.validate().is_err());
    }

    #[test]
    fn unit_conversion() {
        let truth = VitalsGroundTruth::resting();
        assert_eq!(truth.resp_rate_per_min(), 15.0);
        assert!((truth.heart_rate_per_min() - 72.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let truth = VitalsGroundTruth::resting();
        assert!(matches!(synth_displacement(&truth, 0.0, 100.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(synth_displacement(&truth, -1.0, 100.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(synth_displacement(&truth, 10.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(synth_displacement(&truth, 10.0, 10.0), Err(Error::InvalidArgument(_))));
        let trace = synth_displacement(&truth, 10.0, 100.0).unwrap();
        assert!(matches!(displacement_to_phase(&trace, 0.0), Err(Error::InvalidArgument(_))));
        assert!(VitalsGroundTruth::new(0.05, 1.2, 4.0, 0.2).is_err());
        assert!(VitalsGroundTruth::new(0.25, 2.5, 4.0, 0.2).is_err());
        assert!(VitalsGroundTruth::new(0.25, 1.2, 0.2, 4.0).is_err());
    }

    #[test]
    fn sixty_ghz_wavelength() {
        assert!((wavelength_60ghz_mm() - 5.0).abs() < 0.01);
    }

    #[test]
    fn phase_peak_for_4mm() {
        let trace = DisplacementTrace {
            samples: vec![0.0, 4.0, -4.0],
            sample_rate_hz: 100.0,
        };
        let phase = displacement_to_phase(&trace, 5.0).unwrap();
        assert!((phase.samples[1] - 10.053).abs() < 1e-3);
        assert_eq!(phase.sample_rate_hz, 100.0);
        let zero = DisplacementTrace {
            samples: vec![0.0; 16],
            sample_rate_hz: 100.0,
        };
        assert!(displacement_to_phase(&zero, 5.0).unwrap().samples.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn energy_over_whole_periods() {
        // 0.25 Hz and 1.25 Hz both complete whole periods in 20 s.
        let truth = VitalsGroundTruth::new(0.25, 1.25, 4.0, 0.3).unwrap();
        let trace = synth_displacement(&truth, 20.0, 100.0).unwrap();
        let energy: f64 = trace.samples.iter().map(|x| x * x).sum();
        let expected = (4.0f64.powi(2) + 0.3f64.powi(2)) / 2.0 * trace.samples.len() as f64;
        assert!((energy / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn corrupt_identity_and_determinism() {
        let phase = simulate_phase(&VitalsGroundTruth::resting(), 30.0, 100.0, 5.0).unwrap();
        assert_eq!(corrupt(&phase, f64::INFINITY, 0.0, 1).unwrap(), phase);
        let a = corrupt(&phase, 10.0, 0.0, 42).unwrap();
        let b = corrupt(&phase, 10.0, 0.0, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = corrupt(&phase, 10.0, 0.0, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn corrupt_hits_requested_snr() {
        let phase = simulate_phase(&VitalsGroundTruth::resting(), 60.0, 100.0, 5.0).unwrap();
        let noisy = corrupt(&phase, 0.0, 0.0, 9).unwrap();
        let p_sig = phase.samples.iter().map(|x| x * x).sum::<f64>();
        let p_noise = noisy
            .samples
            .iter()
            .zip(&phase.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        assert!((p_sig / p_noise - 1.0).abs() < 0.05);
    }

    #[test]
    fn corrupt_zero_snr_keeps_respiration_peak() {
        let phase = simulate_phase(&VitalsGroundTruth::resting(), 30.0, 100.0, 5.0).unwrap();
        let noisy = corrupt(&phase, 0.0, 0.0, 42).unwrap();
        // Fine-grid DFT oracle over the respiration band.
        let best = (0..=400)
            .map(|k| 0.1 + k as f64 * 0.001)
            .map(|f| (f, dft_amplitude(&noisy.samples, 100.0, f)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((best.0 - 0.25).abs() <= 0.02, "peak at {}", best.0);
    }

    #[test]
    fn drift_is_linear() {
        let phase = PhaseSignal::new(vec![0.0; 101], 100.0, 5.0).unwrap();
        let drifted = corrupt(&phase, f64::INFINITY, 0.5, 0).unwrap();
        assert!((drifted.samples[100] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let phase = simulate_phase(&VitalsGroundTruth::resting(), 2.0, 100.0, 5.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&phase.samples, phase.sample_rate_hz, &mut buf).unwrap();
        assert!(buf.starts_with(b"t_s,value\n"));
        let back = read_phase_csv(buf.as_slice(), 5.0).unwrap();
        assert_eq!(back.sample_rate_hz, 100.0);
        assert_eq!(back.samples.len(), phase.samples.len());
        for (a, b) in back.samples.iter().zip(&phase.samples) {
            assert_eq!(a, b);
        }
        assert!(read_csv("time,v\n0,1\n".as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn phase_is_linear(a in -10.0f64..10.0, seed in 0u64..1000) {
            let truth = VitalsGroundTruth::resting().with_phases(seed as f64 * 0.01, 0.3);
            let trace = synth_displacement(&truth, 1.0, 50.0).unwrap();
            let scaled = DisplacementTrace {
                samples: trace.samples.iter().map(|x| a * x).collect(),
                sample_rate_hz: trace.sample_rate_hz,
            };
            let p = displacement_to_phase(&trace, 5.0).unwrap();
            let ps = displacement_to_phase(&scaled, 5.0).unwrap();
            for (x, y) in p.samples.iter().zip(&ps.samples) {
                proptest::prop_assert!((a * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
