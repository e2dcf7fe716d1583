//! Rendering contract: WAV framing read back by an independent decoder,
//! tuning, recoverable tempo, normalization and crossfade power.

use std::f64::consts::PI;

use biotone_core::audio::{crossfade, encode_wav, estimate_tempo, render, render_note_clip, AudioClip, PEAK_LEVEL, SAMPLE_RATE_HZ};
use biotone_core::melody::{generate_for_plan, NoteEvent};
use biotone_core::pentatonic::PentatonicMode;
use biotone_core::planner::{plan, Genre, Instrument, MusicPlan};
use biotone_core::state::{build_user_state, HrBand, RrBand, VitalTokens};
use proptest::prelude::*;

const INSTRUMENTS: [Instrument; 6] = [
    Instrument::Guzheng,
    Instrument::Erhu,
    Instrument::Strings,
    Instrument::Pad,
    Instrument::Dizi,
    Instrument::Percussion,
];

/// Magnitude of the DTFT at `freq` over the whole clip.
fn dtft_mag(samples: &[f32], freq: f64) -> f64 {
    let w = 2.0 * PI * freq / SAMPLE_RATE_HZ as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &s) in samples.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / samples.len() as f64).cos();
        re += s as f64 * hann * (w * n as f64).cos();
        im -= s as f64 * hann * (w * n as f64).sin();
    }
    re.hypot(im)
}

fn strongest_between(samples: &[f32], lo: f64, hi: f64, step: f64) -> f64 {
    let mut best = (lo, 0.0);
    let mut f = lo;
    while f <= hi {
        let m = dtft_mag(samples, f);
        if m > best.1 {
            best = (f, m);
        }
        f += step;
    }
    best.0
}

#[test]
fn wav_bytes_parse_with_an_independent_reader() {
    let p = MusicPlan {
        tempo_bpm: 96,
        genre_mood: Genre::Folk,
        instrumentation: vec![Instrument::Dizi],
        mode: PentatonicMode::Shang,
        tonic_pc: 2,
        intensity: 0.5,
    };
    let clip = render(&generate_for_plan(&p, 2, 9).unwrap(), &p).unwrap();
    let bytes = encode_wav(&clip);
    let mut reader = hound::WavReader::new(std::io::Cursor::new(&bytes)).unwrap();
    let spec = reader.spec();
    assert_eq!((spec.sample_rate, spec.channels, spec.bits_per_sample), (44_100, 1, 16));
    assert_eq!(spec.sample_format, hound::SampleFormat::Int);
    let back: Vec<i16> = reader.samples::<i16>().map(|s| s.unwrap()).collect();
    assert_eq!(back.len(), clip.samples.len());
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize, bytes.len() - 8);
    for (q, s) in back.iter().zip(&clip.samples) {
        assert!((*q as f64 / 32767.0 - *s as f64).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn a4_peaks_at_440_for_every_timbre() {
    for inst in INSTRUMENTS {
        let clip = render_note_clip(NoteEvent::new(0.0, 1.0, 69, 0.8), 60, inst).unwrap();
        let coarse = strongest_between(&clip.samples, 100.0, 2000.0, 2.0);
        let fine = strongest_between(&clip.samples, coarse - 3.0, coarse + 3.0, 0.05);
        assert!((fine - 440.0).abs() <= 1.0, "{inst}: peak at {fine} Hz");
    }
}

#[test]
fn planned_renders_keep_their_tempo() {
    let mut checked = std::collections::HashSet::new();
    for hr in HrBand::ALL {
        for rr in RrBand::ALL {
            for clock in ["08:00", "20:00", "23:30"] {
                for status in ["resting", "active"] {
                    let s = build_user_state(VitalTokens { hr_band: hr, rr_band: rr }, clock, 22.0, status, None).unwrap();
                    let (p, _) = plan(&s, None, 0);
                    if !checked.insert((p.tempo_bpm, p.lead(), (p.intensity * 100.0) as i64)) {
                        continue;
                    }
                    for seed in 0..2 {
                        let clip = render(&generate_for_plan(&p, 8, seed).unwrap(), &p).unwrap();
                        let est = estimate_tempo(&clip, 40.0, 180.0).unwrap();
                        assert!((est - p.tempo_bpm as f64).abs() <= 2.0, "{p:?} seed {seed}: {est}");
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_is_finite_and_normalized(inst in 0usize..6, tempo in 40u32..=180, mode in 0usize..5, tonic in 0u8..12, intensity in 0.0f64..=1.0, seed in any::<u64>()) {
        let p = MusicPlan {
            tempo_bpm: tempo,
            genre_mood: Genre::Folk,
            instrumentation: vec![INSTRUMENTS[inst]],
            mode: PentatonicMode::ALL[mode],
            tonic_pc: tonic,
            intensity,
        };
        let clip = render(&generate_for_plan(&p, 1, seed).unwrap(), &p).unwrap();
        prop_assert!(clip.samples.iter().all(|s| s.is_finite()));
        prop_assert!(clip.peak() <= PEAK_LEVEL + 1e-6);
        prop_assert!(clip.peak() >= PEAK_LEVEL - 1e-3);
    }
}

/// Equal power means the summed power of uncorrelated inputs stays flat
/// through the overlap. Tones at 1 kHz and 1.5 kHz are orthogonal over
/// each 2 ms block.
#[test]
fn crossfade_keeps_power_flat() {
    let fs = SAMPLE_RATE_HZ as f64;
    let sine = |f: f64| AudioClip::mono((0..(fs as usize)).map(|n| (0.5 * (2.0 * PI * f * n as f64 / fs).sin()) as f32).collect());
    let out = crossfade(&sine(1000.0), &sine(1500.0), 0.5).unwrap();
    let block = (0.002 * fs) as usize;
    let start = (0.5 * fs) as usize;
    let target = 0.125;
    for k in 0..(0.5 * fs) as usize / block {
        let seg = &out.samples[start + k * block..start + (k + 1) * block];
        let power = seg.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / block as f64;
        assert!(((power / target).sqrt() - 1.0).abs() < 0.01, "block {k}: rms ratio {}", (power / target).sqrt());
    }
}
