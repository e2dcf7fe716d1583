//! Small hand-checked cases: classifier worked examples, scale spelling,
//! generator statistics and tracking through a heart-rate step.

use std::f64::consts::PI;

use biotone_core::melody::{generate_for_plan, generate_unconditioned, NoteEvent};
use biotone_core::pentatonic::{classify_mode, scale_pitch_classes, PentatonicMode};
use biotone_core::planner::{Genre, Instrument, MusicPlan};
use biotone_core::radar::{wavelength_60ghz_mm, PhaseSignal};
use biotone_core::vitals::track_vitals;

fn plan(mode: PentatonicMode, tonic_pc: u8, intensity: f64) -> MusicPlan {
    MusicPlan {
        tempo_bpm: 90,
        genre_mood: Genre::Folk,
        instrumentation: vec![Instrument::Erhu],
        mode,
        tonic_pc,
        intensity,
    }
}

#[test]
fn shared_collection_spelled_from_different_tonics() {
    assert_eq!(scale_pitch_classes(PentatonicMode::Yu, 9).unwrap(), [9, 0, 2, 4, 7]);
    assert_eq!(scale_pitch_classes(PentatonicMode::Zhi, 7).unwrap(), [7, 9, 0, 2, 4]);
    assert_eq!(scale_pitch_classes(PentatonicMode::Gong, 0).unwrap(), [0, 2, 4, 7, 9]);
}

#[test]
fn tonic_evidence_breaks_the_collection_tie() {
    // C D E G A with C most frequent and last.
    let on_c = [60, 62, 64, 60, 67, 69, 60, 64, 60];
    let notes: Vec<NoteEvent> = on_c.iter().enumerate().map(|(i, &p)| NoteEvent::new(i as f64, 1.0, p, 0.8)).collect();
    let c = classify_mode(&notes).unwrap();
    assert_eq!((c.mode, c.tonic_pc), (PentatonicMode::Gong, 0));
    assert_eq!(c.confidence, 1.0);

    // Same collection, ending on a long A.
    let mut on_a: Vec<NoteEvent> = [60, 62, 64, 67, 69, 64, 62, 60]
        .iter()
        .enumerate()
        .map(|(i, &p)| NoteEvent::new(i as f64, 1.0, p, 0.8))
        .collect();
    on_a.push(NoteEvent::new(8.0, 3.0, 69, 0.8));
    let c = classify_mode(&on_a).unwrap();
    assert_eq!((c.mode, c.tonic_pc), (PentatonicMode::Yu, 9));
}

fn mean_abs_interval(notes: &[NoteEvent]) -> f64 {
    let steps: Vec<f64> = notes.windows(2).map(|w| (w[1].pitch as f64 - w[0].pitch as f64).abs()).collect();
    steps.iter().sum::<f64>() / steps.len() as f64
}

#[test]
fn intensity_widens_melodic_leaps() {
    for mode in PentatonicMode::ALL {
        for seed in 0..20 {
            let calm = generate_for_plan(&plan(mode, 2, 0.1), 8, seed).unwrap();
            let lively = generate_for_plan(&plan(mode, 2, 0.9), 8, seed).unwrap();
            let (a, b) = (mean_abs_interval(&calm.notes), mean_abs_interval(&lively.notes));
            assert!(b > a, "{mode} seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn unconditioned_output_covers_every_pitch_class() {
    let mut seen = [false; 12];
    for seed in 0..1000 {
        for n in generate_unconditioned(&plan(PentatonicMode::Gong, 0, 0.5), 4, seed).unwrap().notes {
            seen[(n.pitch % 12) as usize] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn heart_rate_step_is_followed_within_two_windows() {
    // Heart 1.0 Hz for 30 s then 1.5 Hz, phase-continuous; respiration 0.25 Hz.
    let (fs, change_s, total_s) = (100.0, 30.0, 90.0);
    let lambda = wavelength_60ghz_mm();
    let mut heart_phase: f64 = 0.0;
    let samples: Vec<f64> = (0..(total_s * fs) as usize)
        .map(|i| {
            let t = i as f64 / fs;
            let f = if t < change_s { 1.0 } else { 1.5 };
            let d = 2.0 * (2.0 * PI * 0.25 * t).sin() + 0.5 * heart_phase.sin();
            heart_phase += 2.0 * PI * f / fs;
            4.0 * PI * d / lambda
        })
        .collect();
    let signal = PhaseSignal::new(samples, fs, lambda).unwrap();
    let (window, hop) = (30.0, 5.0);
    let est = track_vitals(&signal, window, hop).unwrap();
    for e in &est {
        let hr = e.heart.rate_per_min;
        if e.window_end_s <= change_s {
            assert!((hr - 60.0).abs() <= 1.0, "{}..{}: {hr}", e.window_start_s, e.window_end_s);
        }
        if e.window_start_s >= change_s + 2.0 * hop {
            assert!((hr - 90.0).abs() <= 1.0, "{}..{}: {hr}", e.window_start_s, e.window_end_s);
        }
    }
}
