//! Symbolic melody generation under three conditioning regimes.
//!
//! * [`generate`]: a walk over scale degrees read from a tiled tonal
//!   embedding, ending on the tonic. Every pitch is in the mode.
//! * [`generate_unconditioned`]: the same rhythm over a chromatic walk.
//! * [`generate_soft`]: the chromatic walk with in-scale pitches, and the
//!   tonic at phrase ends, up-weighted by `1 + bias * SOFT_GAIN`.
//!
//! Rhythm: 4-beat phrases, each closed by a long note. The last phrase
//! closes on a 2-beat note, longer than anything else in the melody.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pentatonic::{classify_mode, ModeSpec, PentatonicMode, PitchEvidence, TonalConditioning, FINAL_NOTE_WEIGHT};
use crate::planner::{Instrument, MusicPlan};
use crate::rng::stream_rng;

pub const MIN_PITCH: u8 = 36;
pub const MAX_PITCH: u8 = 96;
pub const BEATS_PER_BAR: f64 = 4.0;
/// Conditioning steps per bar (sixteenth-note resolution).
pub const STEPS_PER_BAR: usize = 16;
pub const DEFAULT_BARS: usize = 4;

/// Default soft-label bias weight.
pub const DEFAULT_SOFT_BIAS: f64 = 0.5;
/// Soft-label gain. Calibrated so that at [`DEFAULT_SOFT_BIAS`] mode accuracy
/// sits between the unconditioned and embedded regimes with wide margins.
pub const SOFT_GAIN: f64 = 12.0;

const FINAL_BEATS: f64 = 2.0;
const SCALE_POSITIONS: usize = 11;
const CHROMATIC_LOW: u8 = 55;
const CHROMATIC_HIGH: u8 = 84;
const MAX_ATTEMPTS: usize = 64;

const RHYTHM_STREAM: u64 = 1;
const PITCH_STREAM: u64 = 2;

// ── Score types ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    #[serde(rename = "onset")]
    pub onset_beats: f64,
    #[serde(rename = "dur")]
    pub duration_beats: f64,
    pub pitch: u8,
    /// 0 marks a rest.
    #[serde(rename = "vel")]
    pub velocity: f64,
}

impl NoteEvent {
    pub fn new(onset_beats: f64, duration_beats: f64, pitch: u8, velocity: f64) -> Self {
        Self {
            onset_beats,
            duration_beats,
            pitch,
            velocity,
        }
    }

    pub fn pitch_class(&self) -> u8 {
        self.pitch % 12
    }

    pub fn end_beats(&self) -> f64 {
        self.onset_beats + self.duration_beats
    }
}

/// What a score was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreMeta {
    pub tempo_bpm: u32,
    pub mode: Option<PentatonicMode>,
    pub tonic_pc: Option<u8>,
    pub instrument: Option<Instrument>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelodyScore {
    pub notes: Vec<NoteEvent>,
    pub beats_total: f64,
    pub meta: ScoreMeta,
}

impl MelodyScore {
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0.0f64;
        for (i, n) in self.notes.iter().enumerate() {
            if !(n.duration_beats > 0.0) || !(n.onset_beats >= 0.0) {
                return Err(Error::invalid(format!("note {i}: bad onset or duration")));
            }
            if !(MIN_PITCH..=MAX_PITCH).contains(&n.pitch) {
                return Err(Error::invalid(format!("note {i}: pitch {} outside {MIN_PITCH}..={MAX_PITCH}", n.pitch)));
            }
            if !(0.0..=1.0).contains(&n.velocity) {
                return Err(Error::invalid(format!("note {i}: velocity outside [0, 1]")));
            }
            if n.onset_beats + 1e-9 < prev_end {
                return Err(Error::invalid(format!("note {i} overlaps its predecessor")));
            }
            prev_end = n.end_beats();
        }
        if self.beats_total + 1e-9 < prev_end {
            return Err(Error::invalid("beats_total shorter than the notes"));
        }
        Ok(())
    }

    pub fn transposed(&self, semitones: i32) -> Self {
        let mut out = self.clone();
        for n in &mut out.notes {
            n.pitch = (n.pitch as i32 + semitones).clamp(0, 127) as u8;
        }
        out.meta.tonic_pc = out.meta.tonic_pc.map(|t| ((t as i32 + semitones).rem_euclid(12)) as u8);
        out
    }

    /// Mean absolute interval between consecutive sounding notes, in semitones.
    pub fn mean_abs_interval(&self) -> f64 {
        let pitches: Vec<i32> = self.notes.iter().filter(|n| n.velocity > 0.0).map(|n| n.pitch as i32).collect();
        if pitches.len() < 2 {
            return 0.0;
        }
        pitches.windows(2).map(|w| (w[1] - w[0]).abs() as f64).sum::<f64>() / (pitches.len() - 1) as f64
    }

    pub fn to_json(&self) -> MelodyJson {
        MelodyJson {
            bpm: self.meta.tempo_bpm,
            notes: self.notes.clone(),
            mode: self.meta.mode,
            tonic_pc: self.meta.tonic_pc,
            beats_total: Some(self.beats_total),
        }
    }
}

/// File format: `{"bpm", "notes":[{"onset","dur","pitch","vel"}], "mode", "tonic_pc"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelodyJson {
    pub bpm: u32,
    pub notes: Vec<NoteEvent>,
    pub mode: Option<PentatonicMode>,
    pub tonic_pc: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beats_total: Option<f64>,
}

impl MelodyJson {
    pub fn into_score(self) -> Result<MelodyScore> {
        let end = self.notes.iter().map(NoteEvent::end_beats).fold(0.0, f64::max);
        let score = MelodyScore {
            beats_total: self.beats_total.unwrap_or(end).max(end),
            notes: self.notes,
            meta: ScoreMeta {
                tempo_bpm: self.bpm,
                mode: self.mode,
                tonic_pc: self.tonic_pc,
                instrument: None,
                seed: 0,
            },
        };
        score.validate()?;
        Ok(score)
    }
}

// ── Rhythm ─────────────────────────────────────────────────────────────────

struct Slot {
    onset: f64,
    dur: f64,
    velocity: f64,
    /// Closes a phrase.
    phrase_end: bool,
}

/// Beat accents: bar downbeat, other beats, off-beats.
fn accent(onset: f64) -> f64 {
    if onset % BEATS_PER_BAR == 0.0 {
        1.0
    } else if onset.fract() == 0.0 {
        0.8
    } else {
        0.45
    }
}

/// Lays out `bars` four-beat phrases. Every beat carries an onset; beats
/// before the phrase-closing note are either one note or two half-beat
/// notes, the latter more often at higher intensity. Inner phrases close
/// with a one-beat note on beat 4, the last phrase with a two-beat note on
/// beat 3.
fn rhythm(bars: usize, intensity: f64, rng: &mut ChaCha8Rng) -> Vec<Slot> {
    let p_split = (0.15 + 0.7 * intensity).clamp(0.0, 0.95);
    let mut slots = Vec::new();
    for bar in 0..bars {
        let start = bar as f64 * BEATS_PER_BAR;
        let long = if bar + 1 == bars { FINAL_BEATS } else { 1.0 };
        let fill = (BEATS_PER_BAR - long) as usize;
        for beat in 0..fill {
            let onset = start + beat as f64;
            if rng.random_bool(p_split) {
                for half in [0.0, 0.5] {
                    slots.push(Slot {
                        onset: onset + half,
                        dur: 0.5,
                        velocity: accent(onset + half),
                        phrase_end: false,
                    });
                }
            } else {
                slots.push(Slot {
                    onset,
                    dur: 1.0,
                    velocity: accent(onset),
                    phrase_end: false,
                });
            }
        }
        let onset = start + fill as f64;
        slots.push(Slot {
            onset,
            dur: long,
            velocity: accent(onset),
            phrase_end: true,
        });
    }
    slots
}

fn step_weight(step: i32, lambda: f64) -> f64 {
    let w = (-(step.abs() as f64) / lambda).exp();
    if step == 0 {
        0.5 * w
    } else {
        w
    }
}

fn check_bars(bars: usize) -> Result<()> {
    if bars == 0 {
        return Err(Error::invalid("bars must be at least 1"));
    }
    Ok(())
}

// ── Conditioned generation ─────────────────────────────────────────────────

/// Pitch of the tonic in the generator's lower octave (57..=68).
pub fn tonic_base_pitch(tonic_pc: u8) -> u8 {
    57 + (tonic_pc + 3) % 12
}

fn scale_pitch(spec: &ModeSpec, base: u8, pos: usize) -> u8 {
    base + 12 * (pos / 5) as u8 + spec.intervals[pos % 5]
}

/// Accepts a conditioned melody when it covers all five degrees and no
/// other pitch class can outweigh the tonic's cadence evidence.
fn cadence_is_unambiguous(notes: &[NoteEvent], tonic_pc: u8, spec: &ModeSpec) -> bool {
    let Ok(ev) = PitchEvidence::from_notes(notes) else { return false };
    let all_degrees = spec.pitch_classes().iter().all(|&pc| ev.histogram[pc as usize] > 0.0);
    let margin = ev.histogram[tonic_pc as usize] + FINAL_NOTE_WEIGHT * ev.final_dur;
    all_degrees && (0..12u8).filter(|&p| p != tonic_pc).all(|p| ev.histogram[p as usize] < margin)
}

/// Scale run plus cadence used when sampling keeps failing the acceptance
/// test; valid by construction.
fn constructive_melody(slots: &[Slot], spec: &ModeSpec, base: u8) -> Vec<NoteEvent> {
    const RUN: [usize; 8] = [0, 1, 2, 3, 4, 3, 2, 1];
    slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pos = if i + 1 == slots.len() { 0 } else { RUN[i % RUN.len()] };
            NoteEvent::new(s.onset, s.dur, scale_pitch(spec, base, pos), s.velocity)
        })
        .collect()
}

/// Hard-conditioned melody: a first-order walk over two octaves of the
/// mode read from `cond`, closing on the tonic.
pub fn generate(plan: &MusicPlan, cond: &TonalConditioning, bars: usize, seed: u64) -> Result<MelodyScore> {
    check_bars(bars)?;
    if cond.mode != plan.mode {
        return Err(Error::invalid(format!("conditioning mode {} differs from plan mode {}", cond.mode, plan.mode)));
    }
    let needed = bars * STEPS_PER_BAR;
    if cond.steps < needed {
        return Err(Error::invalid(format!("conditioning covers {} steps, melody needs {needed}", cond.steps)));
    }
    let intensity = plan.intensity.clamp(0.0, 1.0);
    let lambda = 0.6 + 2.0 * intensity;
    let base = tonic_base_pitch(plan.tonic_pc);
    let mut rhythm_rng = stream_rng(seed, RHYTHM_STREAM);
    let mut pitch_rng = stream_rng(seed, PITCH_STREAM);
    let slots = rhythm(bars, intensity, &mut rhythm_rng);

    let mut notes = Vec::new();
    for _ in 0..MAX_ATTEMPTS {
        notes.clear();
        let mut pos: usize = if pitch_rng.random_bool(0.5) { 0 } else { 5 };
        for (i, slot) in slots.iter().enumerate() {
            // The mode is read from the conditioning row at the note's step.
            let step = (slot.onset * STEPS_PER_BAR as f64 / BEATS_PER_BAR).round() as usize;
            let row = cond.at_step(step).expect("coverage checked");
            let mode = TonalConditioning::decode(&row).ok_or_else(|| Error::invalid("conditioning row is not one-hot"))?;
            let spec = ModeSpec::new(mode, plan.tonic_pc)?;
            if i + 1 == slots.len() {
                pos = [0usize, 5, 10]
                    .into_iter()
                    .min_by_key(|&t| (t as i32 - pos as i32).abs())
                    .expect("three tonic positions");
            } else if i > 0 {
                let targets: Vec<usize> = (0..SCALE_POSITIONS).collect();
                let weights: Vec<f64> = targets
                    .iter()
                    .map(|&t| step_weight(t as i32 - pos as i32, lambda))
                    .collect();
                let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
                pos = targets[dist.sample(&mut pitch_rng)];
            }
            notes.push(NoteEvent::new(slot.onset, slot.dur, scale_pitch(&spec, base, pos), slot.velocity));
        }
        if cadence_is_unambiguous(&notes, plan.tonic_pc, &ModeSpec::new(plan.mode, plan.tonic_pc)?) {
            return Ok(finish(notes, bars, plan, seed, Some(plan.mode), Some(plan.tonic_pc)));
        }
    }
    let spec = ModeSpec::new(plan.mode, plan.tonic_pc)?;
    let notes = constructive_melody(&slots, &spec, base);
    Ok(finish(notes, bars, plan, seed, Some(plan.mode), Some(plan.tonic_pc)))
}

fn finish(
    notes: Vec<NoteEvent>,
    bars: usize,
    plan: &MusicPlan,
    seed: u64,
    mode: Option<PentatonicMode>,
    tonic_pc: Option<u8>,
) -> MelodyScore {
    MelodyScore {
        notes,
        beats_total: bars as f64 * BEATS_PER_BAR,
        meta: ScoreMeta {
            tempo_bpm: plan.tempo_bpm,
            mode,
            tonic_pc,
            instrument: plan.instrumentation.first().copied(),
            seed,
        },
    }
}

// ── Chromatic generation ───────────────────────────────────────────────────

/// Chromatic walk over `CHROMATIC_LOW..=CHROMATIC_HIGH`. With `bias` the
/// in-scale pitches, and at phrase ends the tonic, are multiplied by
/// `1 + strength`.
fn chromatic_walk(plan: &MusicPlan, bias: Option<(f64, ModeSpec)>, bars: usize, seed: u64) -> Vec<NoteEvent> {
    let intensity = plan.intensity.clamp(0.0, 1.0);
    let lambda = 1.5 + 4.0 * intensity;
    let mut rhythm_rng = stream_rng(seed, RHYTHM_STREAM);
    let mut pitch_rng = stream_rng(seed, PITCH_STREAM);
    let slots = rhythm(bars, intensity, &mut rhythm_rng);
    let range: Vec<u8> = (CHROMATIC_LOW..=CHROMATIC_HIGH).collect();

    let mut pitch: u8 = pitch_rng.random_range(60..=72);
    let mut notes = Vec::with_capacity(slots.len());
    for slot in &slots {
        let weights: Vec<f64> = range
            .iter()
            .map(|&p| {
                let mut w = step_weight(p as i32 - pitch as i32, lambda);
                if let Some((strength, spec)) = &bias {
                    let lift = 1.0 + strength;
                    if spec.contains_pc(p % 12) {
                        w *= lift;
                    }
                    if slot.phrase_end && p % 12 == spec.tonic_pc {
                        w *= lift;
                    }
                }
                w
            })
            .collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        pitch = range[dist.sample(&mut pitch_rng)];
        notes.push(NoteEvent::new(slot.onset, slot.dur, pitch, slot.velocity));
    }
    notes
}

/// Chromatic walk with no tonal target and no cadence.
pub fn generate_unconditioned(plan: &MusicPlan, bars: usize, seed: u64) -> Result<MelodyScore> {
    check_bars(bars)?;
    let notes = chromatic_walk(plan, None, bars, seed);
    Ok(finish(notes, bars, plan, seed, None, None))
}

/// Chromatic walk with a soft preference for the plan's mode. `bias_weight`
/// of 0 reproduces [`generate_unconditioned`] exactly.
pub fn generate_soft(plan: &MusicPlan, bias_weight: f64, bars: usize, seed: u64) -> Result<MelodyScore> {
    generate_soft_with_gain(plan, bias_weight, SOFT_GAIN, bars, seed)
}

/// [`generate_soft`] with an explicit gain, for calibration runs.
pub fn generate_soft_with_gain(plan: &MusicPlan, bias_weight: f64, gain: f64, bars: usize, seed: u64) -> Result<MelodyScore> {
    check_bars(bars)?;
    if !(0.0..=1.0).contains(&bias_weight) {
        return Err(Error::invalid(format!("bias weight {bias_weight} outside [0, 1]")));
    }
    if !(gain >= 0.0 && gain.is_finite()) {
        return Err(Error::invalid("gain must be finite and non-negative"));
    }
    let spec = ModeSpec::new(plan.mode, plan.tonic_pc)?;
    let bias = (bias_weight > 0.0).then_some((bias_weight * gain, spec));
    let notes = chromatic_walk(plan, bias, bars, seed);
    Ok(finish(notes, bars, plan, seed, Some(plan.mode), Some(plan.tonic_pc)))
}

/// Convenience: embedding sized for `bars` and hard-conditioned generation.
pub fn generate_for_plan(plan: &MusicPlan, bars: usize, seed: u64) -> Result<MelodyScore> {
    let cond = crate::pentatonic::tonal_embedding(plan.mode, bars.max(1) * STEPS_PER_BAR)?;
    generate(plan, &cond, bars, seed)
}

/// True when the classifier recovers the score's declared mode.
pub fn classifies_as_declared(score: &MelodyScore) -> bool {
    match (score.meta.mode, classify_mode(&score.notes)) {
        (Some(m), Ok(c)) => c.mode == m,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pentatonic::tonal_embedding;
    use crate::planner::Genre;

    fn plan(mode: PentatonicMode, tonic: u8, intensity: f64) -> MusicPlan {
        MusicPlan {
            tempo_bpm: 90,
            genre_mood: Genre::Folk,
            instrumentation: vec![Instrument::Guzheng],
            mode,
            tonic_pc: tonic,
            intensity,
        }
    }

    #[test]
    fn gong_on_c_in_scale_and_cadence() {
        for seed in 0..50 {
            let s = generate_for_plan(&plan(PentatonicMode::Gong, 0, 0.5), 4, seed).unwrap();
            s.validate().unwrap();
            assert!(s.notes.iter().all(|n| [0, 2, 4, 7, 9].contains(&n.pitch_class())));
            assert_eq!(s.notes.last().unwrap().pitch_class(), 0);
        }
    }

    #[test]
    fn mode_mismatch_and_coverage() {
        let p = plan(PentatonicMode::Gong, 0, 0.5);
        let yu = tonal_embedding(PentatonicMode::Yu, 64).unwrap();
        assert!(matches!(generate(&p, &yu, 4, 1), Err(Error::InvalidArgument(_))));
        let short = tonal_embedding(PentatonicMode::Gong, 8).unwrap();
        assert!(matches!(generate(&p, &short, 4, 1), Err(Error::InvalidArgument(_))));
        assert!(generate_for_plan(&p, 0, 1).is_err());
    }

    #[test]
    fn final_note_is_strictly_longest() {
        let s = generate_for_plan(&plan(PentatonicMode::Zhi, 7, 0.9), 8, 3).unwrap();
        let last = s.notes.last().unwrap();
        assert!(s.notes[..s.notes.len() - 1].iter().all(|n| n.duration_beats < last.duration_beats));
        assert_eq!(s.beats_total, 32.0);
    }

    #[test]
    fn soft_zero_bias_is_unconditioned() {
        let p = plan(PentatonicMode::Jue, 4, 0.4);
        for seed in 0..10 {
            assert_eq!(
                generate_soft(&p, 0.0, 4, seed).unwrap().notes,
                generate_unconditioned(&p, 4, seed).unwrap().notes
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let s = generate_for_plan(&plan(PentatonicMode::Yu, 9, 0.3), 2, 11).unwrap();
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["notes"][0].get("onset").is_some() && v["notes"][0].get("vel").is_some());
        let back = serde_json::from_str::<MelodyJson>(&text).unwrap().into_score().unwrap();
        assert_eq!(back.notes, s.notes);
        assert_eq!(back.meta.mode, Some(PentatonicMode::Yu));
    }
}
