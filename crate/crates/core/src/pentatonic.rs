//! The five Chinese pentatonic modes, tonal conditioning vectors and a
//! rule-based mode/tonic classifier.
//!
//! All five modes are rotations of one anhemitonic collection. Over a single
//! collection the modes differ only in which pitch class is the tonic, so the
//! classifier scores a hypothesis as in-collection weight plus tonic evidence
//! (duration share, final note, longest note).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melody::NoteEvent;

/// Degrees 1, 2, 3, 5, 6 of the major scale.
pub const GONG_INTERVALS: [u8; 5] = [0, 2, 4, 7, 9];

/// Tonic evidence weights, applied to the final and longest note durations.
pub const FINAL_NOTE_WEIGHT: f64 = 2.0;
pub const LONGEST_NOTE_WEIGHT: f64 = 1.0;

/// Classifications with confidence below this are flagged.
pub const LOW_CONFIDENCE_THRESHOLD: f64 = 0.8;

pub const MIN_NOTES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PentatonicMode {
    Gong,
    Shang,
    Jue,
    Zhi,
    Yu,
}

impl PentatonicMode {
    /// Fixed order used by embeddings and tie-breaks.
    pub const ALL: [PentatonicMode; 5] = [
        PentatonicMode::Gong,
        PentatonicMode::Shang,
        PentatonicMode::Jue,
        PentatonicMode::Zhi,
        PentatonicMode::Yu,
    ];

    /// Position in [`PentatonicMode::ALL`], which is also the Gong-collection
    /// degree the mode is rooted on.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PentatonicMode::Gong => "Gong",
            PentatonicMode::Shang => "Shang",
            PentatonicMode::Jue => "Jue",
            PentatonicMode::Zhi => "Zhi",
            PentatonicMode::Yu => "Yu",
        }
    }
}

impl fmt::Display for PentatonicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PentatonicMode {
    type Err = Error;

    /// Exact, case-sensitive names only.
    fn from_str(s: &str) -> Result<Self> {
        PentatonicMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown pentatonic mode {s:?}")))
    }
}

// ── Scales ─────────────────────────────────────────────────────────────────

/// Semitone offsets of the mode from its tonic, ascending.
pub fn mode_intervals(mode: PentatonicMode) -> [u8; 5] {
    let root = GONG_INTERVALS[mode.index()];
    let mut out = [0u8; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        let deg = (mode.index() + k) % 5;
        *slot = (GONG_INTERVALS[deg] + 12 - root) % 12;
    }
    out
}

/// Tonic plus ascending intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mode: PentatonicMode,
    pub tonic_pc: u8,
    pub intervals: [u8; 5],
}

impl ModeSpec {
    pub fn new(mode: PentatonicMode, tonic_pc: u8) -> Result<Self> {
        check_pc(tonic_pc)?;
        Ok(Self {
            mode,
            tonic_pc,
            intervals: mode_intervals(mode),
        })
    }

    /// Pitch classes in degree order, starting at the tonic.
    pub fn pitch_classes(&self) -> [u8; 5] {
        self.intervals.map(|i| (self.tonic_pc + i) % 12)
    }

    pub fn contains_pc(&self, pc: u8) -> bool {
        self.pitch_classes().contains(&(pc % 12))
    }
}

fn check_pc(pc: u8) -> Result<()> {
    if pc > 11 {
        return Err(Error::invalid(format!("pitch class {pc} not in 0..=11")));
    }
    Ok(())
}

/// `{(tonic + i) mod 12}` in degree order.
pub fn scale_pitch_classes(mode: PentatonicMode, tonic_pc: u8) -> Result<[u8; 5]> {
    Ok(ModeSpec::new(mode, tonic_pc)?.pitch_classes())
}

/// True when no two pitch classes in the set are a semitone apart,
/// including across the octave wrap.
pub fn is_anhemitonic(pcs: &[u8]) -> bool {
    let mut sorted: Vec<u8> = pcs.iter().map(|p| p % 12).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let n = sorted.len();
    (0..n).all(|i| {
        let next = if i + 1 < n { sorted[i + 1] } else { sorted[0] + 12 };
        next - sorted[i] != 1
    })
}

// ── Tonal conditioning ─────────────────────────────────────────────────────

/// One-hot mode vector replicated across `steps` generation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TonalConditioning {
    pub mode: PentatonicMode,
    pub embedding: [f64; 5],
    pub steps: usize,
    pub tiled: bool,
}

impl TonalConditioning {
    /// The per-step context matrix: `steps` identical rows.
    pub fn tiled_rows(&self) -> Vec<[f64; 5]> {
        vec![self.embedding; self.steps]
    }

    /// Vector seen at step `i`.
    pub fn at_step(&self, i: usize) -> Option<[f64; 5]> {
        (i < self.steps).then_some(self.embedding)
    }

    /// Mode encoded by a conditioning row.
    pub fn decode(row: &[f64; 5]) -> Option<PentatonicMode> {
        let hot: Vec<usize> = (0..5).filter(|&i| row[i] == 1.0).collect();
        let rest_zero = (0..5).filter(|i| !hot.contains(i)).all(|i| row[i] == 0.0);
        (hot.len() == 1 && rest_zero).then(|| PentatonicMode::ALL[hot[0]])
    }
}

pub fn tonal_embedding(mode: PentatonicMode, steps: usize) -> Result<TonalConditioning> {
    if steps == 0 {
        return Err(Error::invalid("embedding needs at least one step"));
    }
    let mut embedding = [0.0; 5];
    embedding[mode.index()] = 1.0;
    Ok(TonalConditioning {
        mode,
        embedding,
        steps,
        tiled: true,
    })
}

// ── Classifier ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub mode: PentatonicMode,
    pub tonic_pc: u8,
    /// In-collection share of sounding duration.
    pub confidence: f64,
    #[serde(default)]
    pub low_confidence: bool,
}

/// Per-pitch-class evidence extracted from a melody.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchEvidence {
    /// Duration-weighted pitch-class histogram of sounding notes.
    pub histogram: [f64; 12],
    pub total: f64,
    pub final_pc: u8,
    pub final_dur: f64,
    pub longest_pc: u8,
    pub longest_dur: f64,
}

impl PitchEvidence {
    /// Rests (velocity 0) are ignored. The final note is the one with the
    /// latest onset; among equally long notes the latest counts as longest.
    pub fn from_notes(notes: &[NoteEvent]) -> Result<Self> {
        if notes.len() < MIN_NOTES {
            return Err(Error::InsufficientData(format!(
                "{} notes, need at least {MIN_NOTES}",
                notes.len()
            )));
        }
        let sounding: Vec<&NoteEvent> = notes.iter().filter(|n| n.velocity > 0.0 && n.duration_beats > 0.0).collect();
        if sounding.is_empty() {
            return Err(Error::InsufficientData("score contains only rests".into()));
        }
        let mut histogram = [0.0; 12];
        for n in &sounding {
            histogram[n.pitch_class() as usize] += n.duration_beats;
        }
        let last = sounding
            .iter()
            .copied()
            .reduce(|a, b| if b.onset_beats >= a.onset_beats { b } else { a })
            .expect("non-empty");
        let longest = sounding
            .iter()
            .copied()
            .reduce(|a, b| {
                if b.duration_beats > a.duration_beats
                    || (b.duration_beats == a.duration_beats && b.onset_beats >= a.onset_beats)
                {
                    b
                } else {
                    a
                }
            })
            .expect("non-empty");
        Ok(Self {
            total: histogram.iter().sum(),
            histogram,
            final_pc: last.pitch_class(),
            final_dur: last.duration_beats,
            longest_pc: longest.pitch_class(),
            longest_dur: longest.duration_beats,
        })
    }

    /// Tonic evidence for pitch class `t`.
    pub fn tonic_bonus(&self, t: u8) -> f64 {
        let mut b = self.histogram[t as usize];
        if self.final_pc == t {
            b += FINAL_NOTE_WEIGHT * self.final_dur;
        }
        if self.longest_pc == t {
            b += LONGEST_NOTE_WEIGHT * self.longest_dur;
        }
        b
    }
}

/// Orders two scored hypotheses: higher score wins, then lower tonic, then
/// lower mode index. Scores within `eps` count as equal.
pub fn better_hypothesis(a: (f64, u8, PentatonicMode), b: (f64, u8, PentatonicMode), eps: f64) -> bool {
    if (a.0 - b.0).abs() > eps {
        return a.0 > b.0;
    }
    (a.1, a.2.index()) < (b.1, b.2.index())
}

/// Score tolerance relative to the total sounding duration.
pub fn score_epsilon(total: f64) -> f64 {
    1e-9 * total.max(1.0)
}

/// Finds the best (mode, tonic) among the 60 hypotheses.
///
/// The score separates into a collection term and a tonic term, so the
/// 12 collection weights are computed once and each hypothesis costs one
/// addition.
pub fn classify_evidence(ev: &PitchEvidence) -> Classification {
    let collection_weight: [f64; 12] =
        std::array::from_fn(|root| GONG_INTERVALS.iter().map(|&i| ev.histogram[(root + i as usize) % 12]).sum());
    let bonus: [f64; 12] = std::array::from_fn(|t| ev.tonic_bonus(t as u8));
    let eps = score_epsilon(ev.total);

    let mut best: Option<(f64, u8, PentatonicMode, usize)> = None;
    for root in 0..12 {
        for mode in PentatonicMode::ALL {
            let tonic = ((root + GONG_INTERVALS[mode.index()] as usize) % 12) as u8;
            let score = collection_weight[root] + bonus[tonic as usize];
            let cand = (score, tonic, mode, root);
            if best.map_or(true, |b| better_hypothesis((score, tonic, mode), (b.0, b.1, b.2), eps)) {
                best = Some(cand);
            }
        }
    }
    let (_, tonic_pc, mode, root) = best.expect("60 hypotheses");
    let confidence = if ev.total > 0.0 {
        (collection_weight[root] / ev.total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Classification {
        mode,
        tonic_pc,
        confidence,
        low_confidence: confidence < LOW_CONFIDENCE_THRESHOLD,
    }
}

pub fn classify_mode(notes: &[NoteEvent]) -> Result<Classification> {
    Ok(classify_evidence(&PitchEvidence::from_notes(notes)?))
}
