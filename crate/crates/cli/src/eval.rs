use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use biotone_core::melody::{generate_for_plan, generate_soft, generate_unconditioned, DEFAULT_BARS, DEFAULT_SOFT_BIAS};
use biotone_core::pentatonic::{classify_mode, PentatonicMode};
use biotone_core::planner::{Genre, Instrument, MusicPlan};
use biotone_core::radar::{corrupt, simulate_phase, VitalsGroundTruth};
use biotone_core::vitals::{track_vitals_with, Estimator, TrackerConfig};
use biotone_core::{Error, Result};

// ── Tonal accuracy ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Tiled mode embedding with hard scale constraint.
    Embedded,
    /// Chromatic walk with a soft bias toward the mode.
    SoftLabel,
    /// Chromatic walk with no tonal target.
    Unconditioned,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Embedded, Condition::SoftLabel, Condition::Unconditioned];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Embedded => "embedded",
            Condition::SoftLabel => "soft_label",
            Condition::Unconditioned => "unconditioned",
        }
    }
}

/// Classifications for one target mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub target: PentatonicMode,
    /// Counts indexed like [`PentatonicMode::ALL`].
    pub predicted: [usize; 5],
    /// Melodies the classifier could not score.
    pub unclassified: usize,
}

impl ConfusionRow {
    pub fn total(&self) -> usize {
        self.predicted.iter().sum::<usize>() + self.unclassified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub confusion: Vec<ConfusionRow>,
}

pub const MIN_TONAL_N: usize = 100;

/// Generates `n` melodies per condition toward uniformly drawn (mode,
/// tonic) targets and scores mode recovery. The same targets and melody
/// seeds are used for every condition.
pub fn eval_tonal(n: usize, seed: u64) -> Result<Vec<EvalReport>> {
    if n < MIN_TONAL_N {
        return Err(Error::InvalidArgument(format!("n must be at least {MIN_TONAL_N}, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<(PentatonicMode, u8, u64)> = (0..n)
        .map(|_| (PentatonicMode::ALL[rng.random_range(0..5)], rng.random_range(0..12u8), rng.random()))
        .collect();
    Condition::ALL
        .iter()
        .map(|&condition| {
            let mut confusion: Vec<ConfusionRow> = PentatonicMode::ALL
                .iter()
                .map(|&target| ConfusionRow {
                    target,
                    predicted: [0; 5],
                    unclassified: 0,
                })
                .collect();
            let mut correct = 0;
            for &(mode, tonic_pc, melody_seed) in &targets {
                let plan = MusicPlan {
                    tempo_bpm: 90,
                    genre_mood: Genre::Folk,
                    instrumentation: vec![Instrument::Guzheng],
                    mode,
                    tonic_pc,
                    intensity: 0.5,
                };
                let score = match condition {
                    Condition::Embedded => generate_for_plan(&plan, DEFAULT_BARS, melody_seed)?,
                    Condition::SoftLabel => generate_soft(&plan, DEFAULT_SOFT_BIAS, DEFAULT_BARS, melody_seed)?,
                    Condition::Unconditioned => generate_unconditioned(&plan, DEFAULT_BARS, melody_seed)?,
                };
                let row = &mut confusion[mode.index()];
                match classify_mode(&score.notes) {
                    Ok(c) => {
                        row.predicted[c.mode.index()] += 1;
                        correct += (c.mode == mode) as usize;
                    }
                    Err(_) => row.unclassified += 1,
                }
            }
            Ok(EvalReport {
                condition,
                n,
                correct,
                accuracy: correct as f64 / n as f64,
                confusion,
            })
        })
        .collect()
}

// ── Vitals accuracy ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsEvalConfig {
    pub resp_freqs_hz: Vec<f64>,
    pub heart_freqs_hz: Vec<f64>,
    /// `f64::INFINITY` means no noise.
    pub snrs_db: Vec<f64>,
    pub resp_amp_mm: f64,
    pub heart_amp_mm: f64,
    pub resp_harmonic: bool,
    pub duration_s: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub sample_rate_hz: f64,
    pub wavelength_mm: f64,
    pub estimator: Estimator,
}

impl Default for VitalsEvalConfig {
    fn default() -> Self {
        Self {
            resp_freqs_hz: vec![0.15, 0.25, 0.4],
            heart_freqs_hz: vec![0.9, 1.2, 1.8],
            snrs_db: vec![f64::INFINITY, 0.0],
            resp_amp_mm: 2.0,
            heart_amp_mm: 0.5,
            resp_harmonic: true,
            duration_s: 60.0,
            window_s: 30.0,
            hop_s: 5.0,
            sample_rate_hz: 100.0,
            wavelength_mm: biotone_core::radar::wavelength_60ghz_mm(),
            estimator: Estimator::Periodogram,
        }
    }
}

/// Worst and mean absolute error over all windows of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsCase {
    pub resp_freq_hz: f64,
    pub heart_freq_hz: f64,
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub windows: usize,
    pub rr_max_err_rpm: f64,
    pub rr_mean_err_rpm: f64,
    pub hr_max_err_bpm: f64,
    pub hr_mean_err_bpm: f64,
}

/// Summary over the grid for one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsSummary {
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub rr_max_err_rpm: f64,
    pub rr_mean_err_rpm: f64,
    pub hr_max_err_bpm: f64,
    pub hr_mean_err_bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsReport {
    pub seed: u64,
    pub cases: Vec<VitalsCase>,
    pub summary: Vec<VitalsSummary>,
}

impl VitalsReport {
    pub fn summary_for(&self, snr_db: f64) -> Option<&VitalsSummary> {
        self.summary.iter().find(|s| s.snr_db == snr_db || (s.snr_db.is_infinite() && snr_db.is_infinite()))
    }
}

/// JSON has no infinity; a clean run is written as `null`.
mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Synthesizes, corrupts and tracks every grid point. Noise for point `i`
/// uses `seed + i`, so the report is a pure function of the inputs.
pub fn eval_vitals(config: &VitalsEvalConfig, seed: u64) -> Result<VitalsReport> {
    let tracker = TrackerConfig::new(config.window_s, config.hop_s).with_estimator(config.estimator);
    let mut cases = Vec::new();
    let mut point = 0u64;
    for &snr_db in &config.snrs_db {
        for &f_r in &config.resp_freqs_hz {
            for &f_h in &config.heart_freqs_hz {
                let truth = VitalsGroundTruth::new(f_r, f_h, config.resp_amp_mm, config.heart_amp_mm)?
                    .with_resp_harmonic(config.resp_harmonic);
                let clean = simulate_phase(&truth, config.duration_s, config.sample_rate_hz, config.wavelength_mm)?;
                let signal = corrupt(&clean, snr_db, 0.0, seed.wrapping_add(point))?;
                point += 1;
                let track = track_vitals_with(&signal, &tracker)?;
                let rr_err: Vec<f64> = track.iter().map(|v| (v.resp.rate_per_min - truth.resp_rate_per_min()).abs()).collect();
                let hr_err: Vec<f64> = track.iter().map(|v| (v.heart.rate_per_min - truth.heart_rate_per_min()).abs()).collect();
                cases.push(VitalsCase {
                    resp_freq_hz: f_r,
                    heart_freq_hz: f_h,
                    snr_db,
                    windows: track.len(),
                    rr_max_err_rpm: max(&rr_err),
                    rr_mean_err_rpm: mean(&rr_err),
                    hr_max_err_bpm: max(&hr_err),
                    hr_mean_err_bpm: mean(&hr_err),
                });
            }
        }
    }
    let summary = config
        .snrs_db
        .iter()
        .map(|&snr_db| {
            let rows: Vec<&VitalsCase> = cases.iter().filter(|c| c.snr_db.to_bits() == snr_db.to_bits()).collect();
            let pick = |f: fn(&VitalsCase) -> f64| rows.iter().map(|c| f(c)).collect::<Vec<f64>>();
            VitalsSummary {
                snr_db,
                rr_max_err_rpm: max(&pick(|c| c.rr_max_err_rpm)),
                rr_mean_err_rpm: mean(&pick(|c| c.rr_mean_err_rpm)),
                hr_max_err_bpm: max(&pick(|c| c.hr_max_err_bpm)),
                hr_mean_err_bpm: mean(&pick(|c| c.hr_mean_err_bpm)),
            }
        })
        .collect();
    Ok(VitalsReport { seed, cases, summary })
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
