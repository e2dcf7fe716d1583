//! Radar simulation and vitals DSP properties, checked against direct
//! arithmetic rather than the crate's own helpers.

use std::f64::consts::PI;

use biotone_core::radar::{corrupt, displacement_to_phase, simulate_phase, synth_displacement, DisplacementTrace, VitalsGroundTruth};
use biotone_core::vitals::{
    estimate_rate_periodogram, estimate_rate_subspace, median_smooth, periodogram_candidates, subspace_candidates, track_vitals,
    RateEstimate, VitalsEstimate,
};
use proptest::prelude::*;

const FS: f64 = 100.0;

fn tone(freq_hz: f64, duration_s: f64) -> biotone_core::radar::PhaseSignal {
    let samples = (0..(duration_s * FS) as usize)
        .map(|i| (2.0 * PI * freq_hz * i as f64 / FS).sin())
        .collect();
    biotone_core::radar::PhaseSignal::new(samples, FS, 5.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn displacement_energy_over_common_period(
        resp_k in 2u32..11,
        heart_k in 8u32..21,
        a_r in 1.0f64..6.0,
        a_h in 0.05f64..0.9,
        periods in 2u32..5,
    ) {
        // Frequencies on a 0.05 Hz grid share a 20 s period.
        let (f_r, f_h) = (0.05 * resp_k as f64, 0.1 * heart_k as f64);
        let truth = VitalsGroundTruth::new(f_r, f_h, a_r, a_h).unwrap().with_resp_harmonic(false);
        let duration = 20.0 * periods as f64;
        let trace = synth_displacement(&truth, duration, FS).unwrap();
        let n = trace.samples.len() as f64;
        let energy: f64 = trace.samples.iter().map(|x| x * x).sum();
        let expected = (a_r * a_r + a_h * a_h) / 2.0 * n;
        prop_assert!((energy - expected).abs() <= 0.01 * expected, "{energy} vs {expected}");
    }

    #[test]
    fn phase_is_exactly_linear(a in -8.0f64..8.0, seed in 0u64..1000, lambda in 1.0f64..10.0) {
        let samples: Vec<f64> = (0..200).map(|i| ((seed + i) as f64 * 0.37).sin()).collect();
        let x = DisplacementTrace { samples: samples.clone(), sample_rate_hz: FS };
        let ax = DisplacementTrace { samples: samples.iter().map(|s| a * s).collect(), sample_rate_hz: FS };
        let p = displacement_to_phase(&x, lambda).unwrap();
        let pa = displacement_to_phase(&ax, lambda).unwrap();
        for (u, v) in p.samples.iter().zip(&pa.samples) {
            // 4π/λ · (a·x) and a · (4π/λ · x) round identically only up to one ulp.
            prop_assert!((a * u - v).abs() <= 4.0 * f64::EPSILON * v.abs().max(1e-300));
        }
    }

    #[test]
    fn corruption_is_seeded(seed in any::<u64>(), snr in -10.0f64..30.0) {
        let sig = simulate_phase(&VitalsGroundTruth::resting(), 10.0, FS, 5.0).unwrap();
        let a = corrupt(&sig, snr, 0.01, seed).unwrap();
        let b = corrupt(&sig, snr, 0.01, seed).unwrap();
        prop_assert_eq!(a.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let clean = corrupt(&sig, f64::INFINITY, 0.0, seed).unwrap();
        prop_assert_eq!(clean, sig);
    }

    #[test]
    fn rate_is_sixty_times_frequency(f in 0.01f64..5.0, c in -1.0f64..2.0) {
        let r = RateEstimate::from_freq(f, c);
        prop_assert_eq!(r.rate_per_min, 60.0 * f);
        prop_assert!((0.0..=1.0).contains(&r.confidence));
    }

    #[test]
    fn track_length_formula(duration in 30.0f64..90.0, window in 10.0f64..30.0, hop in 1.0f64..10.0) {
        let sig = simulate_phase(&VitalsGroundTruth::resting(), duration, FS, 5.0).unwrap();
        let out = track_vitals(&sig, window, hop).unwrap();
        let expected = ((sig.duration_s() - window) / hop + 1e-9).floor() as usize + 1;
        prop_assert_eq!(out.len(), expected);
    }
}

#[test]
fn estimators_agree_on_clean_tones() {
    for k in 2..=40 {
        let f = 0.05 * k as f64;
        let (lo, hi) = ((f - 0.08).max(0.05), f + 0.08);
        let sig = tone(f, 40.0);
        let p = estimate_rate_periodogram(&sig, lo, hi).unwrap();
        let s = estimate_rate_subspace(&sig, 6, lo, hi).unwrap();
        assert!((p.peak_freq_hz - f).abs() <= 0.05, "periodogram at {f}: {}", p.peak_freq_hz);
        assert!((p.peak_freq_hz - s.peak_freq_hz).abs() <= 0.05, "{f} Hz: periodogram {} vs subspace {}", p.peak_freq_hz, s.peak_freq_hz);
    }
}

#[test]
fn single_bad_window_is_smoothed_away() {
    let good = VitalsEstimate::from_rates(72.0, 15.0, 0.0, 30.0);
    for bad_at in 0..8 {
        let mut raw = vec![good; 8];
        raw[bad_at] = VitalsEstimate::from_rates(110.0, 28.0, 0.0, 30.0);
        for v in median_smooth(&raw) {
            assert_eq!(v.heart.rate_per_min, 72.0);
            assert_eq!(v.resp.rate_per_min, 15.0);
        }
    }
}

#[test]
fn resting_subject_is_tracked() {
    let truth = VitalsGroundTruth::resting();
    let sig = simulate_phase(&truth, 60.0, FS, 5.0).unwrap();
    for v in track_vitals(&sig, 30.0, 5.0).unwrap() {
        assert!((v.heart.rate_per_min - truth.heart_rate_per_min()).abs() <= 1.0);
        assert!((v.resp.rate_per_min - truth.resp_rate_per_min()).abs() <= 0.5);
    }
}

#[test]
fn subspace_separates_tones_the_periodogram_merges() {
    // A 10 s window: the periodogram main lobe (~0.2 Hz wide) spans both.
    let samples = (0..(10.0 * FS) as usize)
        .map(|i| {
            let t = i as f64 / FS;
            (2.0 * PI * 1.15 * t).sin() + (2.0 * PI * 1.30 * t + 0.7).sin()
        })
        .collect();
    let s = biotone_core::radar::PhaseSignal::new(samples, FS, 5.0).unwrap();
    let near = |c: &[RateEstimate], f: f64| c.iter().any(|r| (r.peak_freq_hz - f).abs() < 0.02);

    let merged = periodogram_candidates(&s, 0.8, 2.0).unwrap();
    assert!(!(near(&merged, 1.15) && near(&merged, 1.30)), "{merged:?}");
    assert!((merged[0].peak_freq_hz - 1.225).abs() < 0.03, "{merged:?}");

    let resolved = subspace_candidates(&s, 6, 0.8, 2.0).unwrap();
    assert!(near(&resolved, 1.15) && near(&resolved, 1.30), "{resolved:?}");
}
