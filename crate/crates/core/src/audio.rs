//! Direct synthesis of melody scores to 44.1 kHz PCM, WAV encoding and
//! equal-power crossfades.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melody::{MelodyScore, NoteEvent};
use crate::planner::{Instrument, MusicPlan, MAX_TEMPO_BPM, MIN_TEMPO_BPM};
use crate::rng::stream_rng;

pub const SAMPLE_RATE_HZ: u32 = 44_100;
/// Tail appended after the last beat so the final note can decay.
pub const RELEASE_S: f64 = 0.25;
pub const PEAK_LEVEL: f32 = 0.9;
pub const WAV_HEADER_BYTES: usize = 44;

const PCM_SCALE: f64 = 32767.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    /// Interleaved when `channels == 2`.
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub channels: u16,
}

impl AudioClip {
    pub fn mono(samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
            channels: 1,
        }
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// 12-TET, A4 = 440 Hz.
pub fn pitch_to_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

// ── Timbres ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
enum Timbre {
    Pluck,
    Bowed { vibrato_depth: f64, attack_s: f64 },
    Pad,
    Flute,
    Drum,
}

fn timbre_for(instrument: Instrument) -> Timbre {
    match instrument {
        Instrument::Guzheng => Timbre::Pluck,
        Instrument::Erhu => Timbre::Bowed {
            vibrato_depth: 0.003,
            attack_s: 0.04,
        },
        Instrument::Strings => Timbre::Bowed {
            vibrato_depth: 0.0015,
            attack_s: 0.08,
        },
        Instrument::Pad => Timbre::Pad,
        Instrument::Dizi => Timbre::Flute,
        Instrument::Percussion => Timbre::Drum,
    }
}

/// Attack/hold/release gain at time `t` for a note sounding `dur` seconds.
fn envelope(t: f64, dur: f64, attack: f64, release: f64) -> f64 {
    let attack = attack.min(0.5 * dur).max(1e-3);
    if t < attack {
        t / attack
    } else if t < dur {
        1.0
    } else {
        (1.0 - (t - dur) / release).max(0.0)
    }
}

/// Renders one note into `out` starting at sample `start`. `note_seed`
/// drives excitation noise.
fn render_note(out: &mut [f64], start: usize, dur_s: f64, freq: f64, gain: f64, timbre: Timbre, note_seed: u64) {
    let fs = SAMPLE_RATE_HZ as f64;
    let len = (((dur_s + RELEASE_S) * fs).round() as usize).min(out.len().saturating_sub(start));
    if len == 0 {
        return;
    }
    let dst = &mut out[start..start + len];
    match timbre {
        Timbre::Pluck => karplus_strong(dst, dur_s, freq, gain, note_seed),
        Timbre::Bowed {
            vibrato_depth,
            attack_s,
        } => {
            let harmonics = ((fs * 0.45 / freq).floor() as usize).clamp(1, 24);
            let mut rng = stream_rng(note_seed, 2);
            let mut phase = 0.0;
            for (i, y) in dst.iter_mut().enumerate() {
                let t = i as f64 / fs;
                // Vibrato fades in after the attack.
                let depth = vibrato_depth * (t / 0.25).min(1.0);
                let f = freq * (1.0 + depth * (2.0 * PI * 5.5 * t).sin());
                phase += 2.0 * PI * f / fs;
                let mut s = 0.0;
                for k in 1..=harmonics {
                    // Saw partials with a gentle low-pass tilt.
                    s += (k as f64 * phase).sin() / (k as f64 * (1.0 + 0.15 * k as f64));
                }
                *y += gain * (0.6 * s * envelope(t, dur_s, attack_s, RELEASE_S) + attack_noise(&mut rng, t));
            }
        }
        Timbre::Pad => {
            let mut rng = stream_rng(note_seed, 5);
            for (i, y) in dst.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let w = 2.0 * PI * freq * t;
                let s = w.sin() + 0.35 * (2.0 * w).sin() + 0.15 * (3.0 * w).sin();
                let tremolo = 1.0 + 0.05 * (2.0 * PI * 0.7 * t).sin();
                // A short rise to half level, then a slow swell.
                let swell = 0.5 + 0.5 * envelope(t, dur_s, 0.3, RELEASE_S);
                *y += gain * (0.5 * s * tremolo * swell * envelope(t, dur_s, 0.02, RELEASE_S) + attack_noise(&mut rng, t));
            }
        }
        Timbre::Flute => {
            let mut rng = stream_rng(note_seed, 3);
            let mut phase = 0.0;
            for (i, y) in dst.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let f = freq * (1.0 + 0.004 * (t / 0.3).min(1.0) * (2.0 * PI * 5.0 * t).sin());
                phase += 2.0 * PI * f / fs;
                let breath = 0.01 * (rng.random::<f64>() - 0.5);
                let s = phase.sin() + 0.3 * (2.0 * phase).sin() + 0.1 * (3.0 * phase).sin() + breath;
                *y += gain * (0.6 * s * envelope(t, dur_s, 0.03, RELEASE_S) + attack_noise(&mut rng, t));
            }
        }
        Timbre::Drum => {
            // Noise burst through a two-pole resonator tuned to the pitch,
            // plus a decaying tone at the same frequency.
            let mut rng = stream_rng(note_seed, 4);
            let r = 0.9995f64;
            let c = 2.0 * r * (2.0 * PI * freq / fs).cos();
            let (mut y1, mut y2) = (0.0, 0.0);
            let burst = (0.01 * fs) as usize;
            let norm = (1.0 - r) * 2.0;
            for (i, y) in dst.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let x = if i < burst { rng.random::<f64>() - 0.5 } else { 0.0 };
                let v = x + c * y1 - r * r * y2;
                y2 = y1;
                y1 = v;
                let decay = (-t / (0.12 + 0.2 * dur_s.min(1.0))).exp();
                let tone = (2.0 * PI * freq * t).sin() * decay;
                *y += gain * (0.5 * norm * v * 20.0 + 0.6 * tone) * envelope(t, dur_s, 0.002, RELEASE_S);
            }
        }
    }
}

/// Short noise burst at the start of a sustained note (bow bite, tongued
/// breath), so repeated pitches are still articulated.
fn attack_noise(rng: &mut impl Rng, t: f64) -> f64 {
    if t > 0.06 {
        return 0.0;
    }
    0.3 * (rng.random::<f64>() - 0.5) * (-t / 0.01).exp()
}

/// Plucked string: a noise-filled delay line with an averaging loop filter
/// and a first-order allpass for the fractional part of the period.
fn karplus_strong(dst: &mut [f64], dur_s: f64, freq: f64, gain: f64, note_seed: u64) {
    let fs = SAMPLE_RATE_HZ as f64;
    // The averaging filter contributes half a sample of delay.
    let period = fs / freq - 0.5;
    let n = ((period - 0.1).floor() as usize).max(2);
    let frac = period - n as f64;
    let ap = (1.0 - frac) / (1.0 + frac);

    let mut rng = stream_rng(note_seed, 5);
    let mut line: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let mean = line.iter().sum::<f64>() / n as f64;
    line.iter_mut().for_each(|v| *v -= mean);

    let decay = 0.996;
    let mut idx = 0;
    let mut prev = 0.0;
    let (mut ap_x1, mut ap_y1) = (0.0, 0.0);
    for (i, y) in dst.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let out = line[idx];
        let avg = decay * 0.5 * (out + prev);
        prev = out;
        let fractional = ap * avg + ap_x1 - ap * ap_y1;
        ap_x1 = avg;
        ap_y1 = fractional;
        line[idx] = fractional;
        idx = (idx + 1) % n;
        *y += gain * out * envelope(t, dur_s, 0.001, RELEASE_S);
    }
}

// ── Rendering ──────────────────────────────────────────────────────────────

/// Clip length in samples for a score of `beats` at `tempo_bpm`.
pub fn clip_len(beats: f64, tempo_bpm: u32) -> usize {
    ((beats * 60.0 / tempo_bpm as f64 + RELEASE_S) * SAMPLE_RATE_HZ as f64).round() as usize
}

/// Renders with the plan's tempo and lead instrument.
pub fn render(score: &MelodyScore, plan: &MusicPlan) -> Result<AudioClip> {
    let lead = plan
        .instrumentation
        .first()
        .copied()
        .ok_or_else(|| Error::invalid("plan has no instruments"))?;
    render_with(score, plan.tempo_bpm, lead)
}

/// Renders `score` as a mono clip, peak-normalized to [`PEAK_LEVEL`].
/// An empty score gives an empty clip.
pub fn render_with(score: &MelodyScore, tempo_bpm: u32, instrument: Instrument) -> Result<AudioClip> {
    if !(MIN_TEMPO_BPM..=MAX_TEMPO_BPM).contains(&tempo_bpm) {
        return Err(Error::invalid(format!("tempo {tempo_bpm} outside {MIN_TEMPO_BPM}..={MAX_TEMPO_BPM}")));
    }
    if score.notes.is_empty() {
        return Ok(AudioClip::mono(Vec::new()));
    }
    score.validate()?;
    let fs = SAMPLE_RATE_HZ as f64;
    let spb = 60.0 / tempo_bpm as f64;
    let mut buf = vec![0.0f64; clip_len(score.beats_total, tempo_bpm)];
    let timbre = timbre_for(instrument);
    for (i, n) in score.notes.iter().enumerate().filter(|(_, n)| n.velocity > 0.0) {
        let start = (n.onset_beats * spb * fs).round() as usize;
        let note_seed = score.meta.seed ^ ((i as u64) << 8) ^ n.pitch as u64;
        render_note(&mut buf, start, n.duration_beats * spb, pitch_to_hz(n.pitch), n.velocity * n.velocity, timbre, note_seed);
    }
    let peak = buf.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = if peak > 0.0 { PEAK_LEVEL as f64 / peak } else { 0.0 };
    let samples = buf
        .into_iter()
        .map(|s| {
            let v = (s * scale) as f32;
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(AudioClip::mono(samples))
}

/// Renders a single note, handy for timbre checks.
pub fn render_note_clip(note: NoteEvent, tempo_bpm: u32, instrument: Instrument) -> Result<AudioClip> {
    let score = MelodyScore {
        beats_total: note.end_beats(),
        notes: vec![note],
        meta: Default::default(),
    };
    render_with(&score, tempo_bpm, instrument)
}

// ── WAV ────────────────────────────────────────────────────────────────────

/// PCM16 little-endian RIFF/WAVE bytes.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.samples.len() * 2) as u32;
    let block_align = clip.channels * 2;
    let mut out = Vec::with_capacity(WAV_HEADER_BYTES + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) as f64 * PCM_SCALE).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Parses PCM16 WAV bytes, skipping unknown chunks.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let bad = |m: &str| Error::Format(format!("wav: {m}"));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let mut pos = 12;
    let mut fmt: Option<(u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(bad("chunk overruns file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("short fmt chunk"));
                }
                if u16_at(body) != 1 {
                    return Err(bad("not PCM"));
                }
                if u16_at(body + 14) != 16 {
                    return Err(bad("not 16-bit"));
                }
                fmt = Some((u16_at(body + 2), u32_at(body + 4), u16_at(body + 12)));
            }
            b"data" => {
                let (channels, rate, _) = fmt.ok_or_else(|| bad("data before fmt"))?;
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| (i16::from_le_bytes([c[0], c[1]]) as f64 / PCM_SCALE) as f32)
                    .collect();
                return Ok(AudioClip {
                    samples,
                    sample_rate_hz: rate,
                    channels,
                });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(bad("no data chunk"))
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_wav(clip))?;
    Ok(())
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    decode_wav(&std::fs::read(path)?)
}

// ── Crossfade ──────────────────────────────────────────────────────────────

/// Equal-power crossfade: `a` fades out on a cosine, `b` fades in on a sine
/// over the last/first `overlap_s` seconds.
pub fn crossfade(a: &AudioClip, b: &AudioClip, overlap_s: f64) -> Result<AudioClip> {
    if a.sample_rate_hz != b.sample_rate_hz || a.channels != b.channels {
        return Err(Error::invalid("clips differ in sample rate or channel count"));
    }
    if !(overlap_s >= 0.0) {
        return Err(Error::invalid("overlap must be non-negative"));
    }
    let ch = a.channels.max(1) as usize;
    let n = (overlap_s * a.sample_rate_hz as f64).round() as usize;
    if n > a.frames() || n > b.frames() {
        return Err(Error::invalid(format!("overlap of {n} frames exceeds a clip length")));
    }
    let head = (a.frames() - n) * ch;
    let mut out = Vec::with_capacity(a.samples.len() + b.samples.len() - n * ch);
    out.extend_from_slice(&a.samples[..head]);
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64 * PI / 2.0;
        let (g_in, g_out) = x.sin_cos();
        for c in 0..ch {
            let va = a.samples[head + i * ch + c] as f64;
            let vb = b.samples[i * ch + c] as f64;
            out.push((va * g_out + vb * g_in) as f32);
        }
    }
    out.extend_from_slice(&b.samples[n * ch..]);
    Ok(AudioClip {
        samples: out,
        sample_rate_hz: a.sample_rate_hz,
        channels: a.channels,
    })
}

// ── Tempo estimation ───────────────────────────────────────────────────────

const ONSET_FRAME: usize = 1024;
const ONSET_HOP: usize = 128;
/// Neighbouring bins on each side used as the flux reference.
const FLUX_SPREAD: usize = 2;
/// Scale inside `ln(1 + c·|X|)`; small enough that quiet partials stay
/// quiet.
const LOG_COMPRESSION: f64 = 3.0;
/// Weight of the frame-to-frame RMS increase relative to the RMS level.
const LEVEL_RISE_WEIGHT: f64 = 50.0;

/// Spectral flux with vibrato suppression: each bin's log magnitude is
/// compared against the maximum over neighbouring bins of the previous
/// frame, so small pitch wobbles do not register as onsets. Rectified,
/// summed over bins up to 5 kHz and scaled by the frame's RMS level plus
/// its rise over the previous frame, so accented notes stand out even
/// over sustained ones.
pub fn onset_envelope(clip: &AudioClip) -> Vec<f64> {
    let x = &clip.samples;
    if x.len() < ONSET_FRAME {
        return Vec::new();
    }
    let frames = (x.len() - ONSET_FRAME) / ONSET_HOP + 1;
    let window: Vec<f64> = (0..ONSET_FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / ONSET_FRAME as f64).cos())
        .collect();
    let bins = ((5000.0 / clip.sample_rate_hz as f64) * ONSET_FRAME as f64) as usize;
    let fft = FftPlanner::new().plan_fft_forward(ONSET_FRAME);
    let mut buf = vec![Complex::new(0.0, 0.0); ONSET_FRAME];
    let mut prev = vec![0.0f64; bins];
    let mut prev_rms = 0.0;
    let mut env = Vec::with_capacity(frames);
    for f in 0..frames {
        let seg = &x[f * ONSET_HOP..f * ONSET_HOP + ONSET_FRAME];
        for (b, (&s, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new(s as f64 * w, 0.0);
        }
        fft.process(&mut buf);
        let mags: Vec<f64> = (0..bins).map(|k| (1.0 + LOG_COMPRESSION * buf[k].norm()).ln()).collect();
        let mut flux = 0.0;
        if f > 0 {
            for (k, &m) in mags.iter().enumerate() {
                let lo = k.saturating_sub(FLUX_SPREAD);
                let hi = (k + FLUX_SPREAD).min(bins - 1);
                let reference = prev[lo..=hi].iter().fold(0.0f64, |a, &b| a.max(b));
                flux += (m - reference).max(0.0);
            }
        }
        prev = mags;
        let rms = (seg.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / ONSET_FRAME as f64).sqrt();
        let rise = if f > 0 { (rms - prev_rms).max(0.0) } else { 0.0 };
        prev_rms = rms;
        env.push(flux * (rms + LEVEL_RISE_WEIGHT * rise));
    }
    env
}

/// Fraction of the strongest autocorrelation peak a shorter-period peak
/// needs to be taken as the beat.
const BEAT_PEAK_RATIO: f64 = 0.65;

/// Tempo in BPM from the onset-envelope autocorrelation.
///
/// Multiples of the beat period (two beats, a bar) correlate at least as
/// well as the beat itself, so the estimate is the shortest-period peak
/// within [`BEAT_PEAK_RATIO`] of the strongest one, for periods between
/// `min_bpm` and `max_bpm`.
pub fn estimate_tempo(clip: &AudioClip, min_bpm: f64, max_bpm: f64) -> Result<f64> {
    let env = onset_envelope(clip);
    let hop_s = ONSET_HOP as f64 / clip.sample_rate_hz as f64;
    let lag_lo = ((60.0 / max_bpm) / hop_s).floor() as usize;
    let lag_hi = ((60.0 / min_bpm) / hop_s).ceil() as usize;
    if lag_lo < 2 || env.len() < 2 * lag_hi + 2 {
        return Err(Error::InsufficientData("clip too short for tempo estimation".into()));
    }
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let e: Vec<f64> = env.iter().map(|v| v - mean).collect();
    let acf = |lag: usize| -> f64 { e.iter().zip(&e[lag..]).map(|(a, b)| a * b).sum::<f64>() / (e.len() - lag) as f64 };
    let values: Vec<f64> = (lag_lo - 1..=lag_hi + 1).map(acf).collect();
    let peaks: Vec<usize> = (1..values.len() - 1)
        .filter(|&i| values[i] > 0.0 && values[i] >= values[i - 1] && values[i] >= values[i + 1])
        .collect();
    let strongest = peaks
        .iter()
        .map(|&i| values[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let best = peaks
        .into_iter()
        .find(|&i| values[i] >= BEAT_PEAK_RATIO * strongest)
        .ok_or_else(|| Error::NoPeak("no autocorrelation peak in tempo range".into()))?;
    let (l, m, r) = (values[best - 1], values[best], values[best + 1]);
    let denom = l - 2.0 * m + r;
    let offset = if denom.abs() > 1e-18 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let lag = (lag_lo - 1 + best) as f64 + offset;
    Ok(60.0 / (lag * hop_s))
}
