//! Client-side playback model: each segment loops from its scheduled start
//! until its successor has faded in over the successor's `crossfade_s`,
//! with equal-power (sine/cosine) gains across the overlap.

use std::f64::consts::FRAC_PI_2;

use biotone_core::audio::{AudioClip, SAMPLE_RATE_HZ};
use biotone_core::Error;

use crate::error::Result;
use crate::event::SegmentRef;

/// Mixes `segments` (in schedule order) into one clip spanning from the
/// first segment's start to `end_s`.
pub fn mix_timeline(segments: &[(SegmentRef, AudioClip)], end_s: f64) -> Result<AudioClip> {
    let Some((first, _)) = segments.first() else {
        return Ok(AudioClip::mono(Vec::new()));
    };
    let fs = SAMPLE_RATE_HZ as f64;
    let origin = first.scheduled_s;
    if !(end_s > origin) {
        return Err(Error::InvalidArgument(format!("end {end_s} must be after the first segment start {origin}")).into());
    }
    let at = |t: f64| ((t - origin) * fs).round().max(0.0) as usize;
    let mut out = vec![0.0f64; at(end_s)];

    for (k, (seg, clip)) in segments.iter().enumerate() {
        if clip.channels != 1 || clip.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::InvalidArgument("timeline expects mono 44.1 kHz segments".into()).into());
        }
        let start = at(seg.scheduled_s);
        let fade_in = (seg.crossfade_s * fs).round() as usize;
        let (stop, fade_out_start) = match segments.get(k + 1) {
            Some((next, _)) => (at(next.scheduled_s + next.crossfade_s).min(out.len()), at(next.scheduled_s)),
            None => (out.len(), out.len()),
        };
        let period = ((seg.loop_s * fs).round() as usize).max(1);
        let mut pass_start = start;
        while pass_start < stop {
            for (i, &s) in clip.samples.iter().enumerate() {
                let n = pass_start + i;
                if n >= stop {
                    break;
                }
                let mut g = 1.0;
                if n < start + fade_in {
                    g *= (FRAC_PI_2 * (n - start) as f64 / fade_in as f64).sin();
                }
                if n >= fade_out_start {
                    let span = (stop - fade_out_start).max(1);
                    g *= (FRAC_PI_2 * (n - fade_out_start) as f64 / span as f64).cos();
                }
                out[n] += g * s as f64;
            }
            pass_start += period;
        }
    }
    Ok(AudioClip::mono(out.into_iter().map(|s| s.clamp(-1.0, 1.0) as f32).collect()))
}
