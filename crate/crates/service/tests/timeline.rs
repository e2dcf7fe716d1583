//! Playback model: looping segments overlapped by their crossfade leave no
//! gap and no power dip.

use std::f64::consts::PI;

use biotone_core::audio::AudioClip;
use biotone_core::pentatonic::PentatonicMode;
use biotone_core::planner::Instrument;
use biotone_service::timeline::mix_timeline;
use biotone_service::SegmentRef;

const FS: f64 = 44_100.0;

fn seg(index: u64, scheduled_s: f64, crossfade_s: f64) -> SegmentRef {
    SegmentRef {
        id: format!("t-{index:04}"),
        url: format!("/segments/t-{index:04}.wav"),
        bpm: 60,
        mode: PentatonicMode::Gong,
        tonic_pc: 0,
        instrument: Instrument::Pad,
        index,
        seed: index,
        scheduled_s,
        crossfade_s,
        loop_s: 1.0,
        duration_s: 1.0,
        sha256: String::new(),
        wav_base64: None,
    }
}

/// One second of a sine with a whole number of cycles, so it loops cleanly.
fn tone(freq: f64) -> AudioClip {
    AudioClip::mono((0..FS as usize).map(|n| (0.5 * (2.0 * PI * freq * n as f64 / FS).sin()) as f32).collect())
}

#[test]
fn power_stays_flat_across_loops_and_crossfades() {
    let segments = vec![
        (seg(0, 0.0, 0.0), tone(1000.0)),
        (seg(1, 3.0, 0.5), tone(1500.0)),
        (seg(2, 6.2, 1.5), tone(2000.0)),
    ];
    let mix = mix_timeline(&segments, 10.0).unwrap();
    assert_eq!(mix.samples.len(), 10 * FS as usize);
    let block = (0.002 * FS) as usize;
    for (k, chunk) in mix.samples.chunks_exact(block).enumerate() {
        let rms = (chunk.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / block as f64).sqrt();
        let ratio = rms / (0.5 / 2f64.sqrt());
        assert!((ratio - 1.0).abs() < 0.01, "block at {:.3} s: rms ratio {ratio:.4}", k as f64 * 0.002);
    }
}

#[test]
fn successor_takes_over_after_its_crossfade() {
    let segments = vec![(seg(0, 0.0, 0.0), tone(1000.0)), (seg(1, 2.0, 0.5), tone(1500.0))];
    let mix = mix_timeline(&segments, 4.0).unwrap();
    let after: Vec<f32> = mix.samples[(2.6 * FS) as usize..(3.0 * FS) as usize].to_vec();
    let pure = tone(1500.0);
    let offset = (0.6 * FS) as usize;
    for (i, s) in after.iter().enumerate() {
        assert!((s - pure.samples[offset + i]).abs() < 1e-6);
    }
}

#[test]
fn end_before_start_is_rejected() {
    assert!(mix_timeline(&[(seg(0, 5.0, 0.0), tone(440.0))], 4.0).is_err());
    assert!(mix_timeline(&[], 4.0).unwrap().samples.is_empty());
}
