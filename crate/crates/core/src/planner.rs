//! Rule-based music planner.
//!
//! Planning runs in three recorded stages: observe the state tokens and
//! context, choose an intent, then derive tempo, genre, instrumentation,
//! mode, tonic and intensity from the intent. The full table:
//!
//! | condition (first match wins)                      | intent           |
//! |---------------------------------------------------|------------------|
//! | rr fast                                           | stimulation      |
//! | hr low/normal and rr slow                         | relaxation       |
//! | late night                                        | sleep_transition |
//! | hr high                                           | stimulation      |
//! | hr elevated, evening                              | sleep_transition |
//! | hr elevated, morning/day                          | neutral          |
//! | hr low/normal, rr normal, resting                 | relaxation       |
//! | hr low/normal, rr normal, otherwise               | neutral          |
//!
//! | intent           | mode                         | genre                          | base tempo |
//! |------------------|------------------------------|--------------------------------|------------|
//! | relaxation       | Gong                         | ambient                        | 60         |
//! | sleep_transition | Yu                           | lullaby (late) / classical     | 80         |
//! | neutral          | Shang (morning, day) / Jue   | folk                           | 92         |
//! | stimulation      | Zhi                          | percussive (rr fast) / energizing | 120     |
//!
//! Tempo adds −6/0/+12 for rr slow/normal/fast and −4/0/+2/+4 for hr
//! low/normal/elevated/high, clamped to 40–180.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pentatonic::PentatonicMode;
use crate::rng::stream_rng;
use crate::state::{HrBand, RrBand, TimeBucket, UserState};

pub const MIN_TEMPO_BPM: u32 = 40;
pub const MAX_TEMPO_BPM: u32 = 180;
pub const MAX_INSTRUMENTS: usize = 3;

const TONIC_STREAM: u64 = 0x746f_6e69;

// ── Vocabulary ─────────────────────────────────────────────────────────────

macro_rules! vocab {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::invalid(format!(concat!("unknown ", stringify!($name), " {:?}"), s)))
            }
        }
    };
}

vocab!(Genre {
    Ambient => "ambient",
    Classical => "classical",
    Folk => "folk",
    Percussive => "percussive",
    Energizing => "energizing",
    Lullaby => "lullaby",
});

vocab!(Instrument {
    Erhu => "erhu",
    Guzheng => "guzheng",
    Dizi => "dizi",
    Pad => "pad",
    Strings => "strings",
    Percussion => "percussion",
});

vocab!(Intent {
    SleepTransition => "sleep_transition",
    Relaxation => "relaxation",
    Neutral => "neutral",
    Stimulation => "stimulation",
});

impl Genre {
    /// Use-case phrase in rendered prompts.
    pub fn use_case(self) -> &'static str {
        match self {
            Genre::Ambient => "relaxation",
            Genre::Classical => "meditation",
            Genre::Folk => "focus",
            Genre::Percussive => "exercise",
            Genre::Energizing => "activation",
            Genre::Lullaby => "sleep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureBucket {
    Cold,
    Comfortable,
    Hot,
}

impl TemperatureBucket {
    /// cold < 16 ≤ comfortable ≤ 26 < hot.
    pub fn of(temp_c: f64) -> Self {
        if temp_c < 16.0 {
            TemperatureBucket::Cold
        } else if temp_c <= 26.0 {
            TemperatureBucket::Comfortable
        } else {
            TemperatureBucket::Hot
        }
    }
}

// ── Plan and trace ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicPlan {
    pub tempo_bpm: u32,
    pub genre_mood: Genre,
    pub instrumentation: Vec<Instrument>,
    pub mode: PentatonicMode,
    pub tonic_pc: u8,
    pub intensity: f64,
}

impl MusicPlan {
    pub fn lead(&self) -> Instrument {
        self.instrumentation[0]
    }

    pub fn validate(&self) -> Result<()> {
        validate_plan(&serde_json::to_value(self).map_err(|e| Error::Format(e.to_string()))?).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub signal: String,
    pub reading: String,
    pub interpretation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rationale {
    pub parameter: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanOrigin {
    Rules,
    External,
    Fallback { reason: String },
}

/// Observe → intent → parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub observations: Vec<Observation>,
    pub intent: Intent,
    pub parameter_rationale: Vec<Rationale>,
    pub origin: PlanOrigin,
}

impl ReasoningTrace {
    pub const STAGES: [&'static str; 3] = ["observe", "intent", "parameters"];

    pub fn stages(&self) -> [&'static str; 3] {
        Self::STAGES
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self.origin, PlanOrigin::Fallback { .. })
    }
}

// ── Rule planner ───────────────────────────────────────────────────────────

pub fn choose_intent(state: &UserState) -> Intent {
    let hr = state.tokens.hr_band;
    let rr = state.tokens.rr_band;
    let calm_hr = matches!(hr, HrBand::Low | HrBand::Normal);
    if rr == RrBand::Fast {
        return Intent::Stimulation;
    }
    if calm_hr && rr == RrBand::Slow {
        return Intent::Relaxation;
    }
    if state.time_bucket == TimeBucket::LateNight {
        return Intent::SleepTransition;
    }
    match hr {
        HrBand::High => Intent::Stimulation,
        HrBand::Elevated if state.time_bucket == TimeBucket::Evening => Intent::SleepTransition,
        HrBand::Elevated => Intent::Neutral,
        _ if state.is_resting() => Intent::Relaxation,
        _ => Intent::Neutral,
    }
}

fn base_tempo(intent: Intent) -> i32 {
    match intent {
        Intent::Relaxation => 60,
        Intent::SleepTransition => 80,
        Intent::Neutral => 92,
        Intent::Stimulation => 120,
    }
}

fn rr_tempo_offset(rr: RrBand) -> i32 {
    match rr {
        RrBand::Slow => -6,
        RrBand::Normal => 0,
        RrBand::Fast => 12,
    }
}

fn hr_tempo_offset(hr: HrBand) -> i32 {
    match hr {
        HrBand::Low => -4,
        HrBand::Normal => 0,
        HrBand::Elevated => 2,
        HrBand::High => 4,
    }
}

fn choose_mode(intent: Intent, bucket: TimeBucket) -> PentatonicMode {
    match intent {
        Intent::Relaxation => PentatonicMode::Gong,
        Intent::SleepTransition => PentatonicMode::Yu,
        Intent::Neutral if matches!(bucket, TimeBucket::Morning | TimeBucket::Day) => PentatonicMode::Shang,
        Intent::Neutral => PentatonicMode::Jue,
        Intent::Stimulation => PentatonicMode::Zhi,
    }
}

fn choose_genre(intent: Intent, state: &UserState) -> Genre {
    match intent {
        Intent::Relaxation => Genre::Ambient,
        Intent::SleepTransition if state.time_bucket == TimeBucket::LateNight => Genre::Lullaby,
        Intent::SleepTransition => Genre::Classical,
        Intent::Neutral => Genre::Folk,
        Intent::Stimulation if state.tokens.rr_band == RrBand::Fast => Genre::Percussive,
        Intent::Stimulation => Genre::Energizing,
    }
}

fn default_instruments(genre: Genre) -> Vec<Instrument> {
    use Instrument::*;
    match genre {
        Genre::Ambient => vec![Erhu, Pad],
        Genre::Lullaby => vec![Guzheng, Pad],
        Genre::Classical => vec![Erhu, Strings],
        Genre::Folk => vec![Dizi, Guzheng],
        Genre::Percussive => vec![Percussion, Dizi],
        Genre::Energizing => vec![Dizi, Strings, Percussion],
    }
}

/// Moves the previous lead to the front when the genre's ensemble includes it.
fn keep_lead(mut ensemble: Vec<Instrument>, prev_lead: Option<Instrument>) -> Vec<Instrument> {
    if let Some(lead) = prev_lead {
        if let Some(pos) = ensemble.iter().position(|&i| i == lead) {
            let inst = ensemble.remove(pos);
            ensemble.insert(0, inst);
        }
    }
    ensemble
}

fn choose_intensity(intent: Intent, state: &UserState) -> f64 {
    let base: f64 = match intent {
        Intent::Relaxation => 0.2,
        Intent::SleepTransition => 0.3,
        Intent::Neutral => 0.5,
        Intent::Stimulation => 0.8,
    };
    let hr = match state.tokens.hr_band {
        HrBand::Low => -0.05,
        HrBand::Normal => 0.0,
        HrBand::Elevated => 0.05,
        HrBand::High => 0.1,
    };
    let temp = match TemperatureBucket::of(state.temperature_c) {
        TemperatureBucket::Cold => 0.05,
        TemperatureBucket::Comfortable => 0.0,
        TemperatureBucket::Hot => -0.05,
    };
    (((base + hr + temp) * 100.0).round() / 100.0).clamp(0.0, 1.0)
}

/// Tonic drawn from the seed; identical seeds give identical tonics.
pub fn seeded_tonic(seed: u64) -> u8 {
    stream_rng(seed, TONIC_STREAM).random_range(0..12u8)
}

/// First trace stage: how each input reads.
pub fn observe(state: &UserState) -> Vec<Observation> {
    let hr = match state.tokens.hr_band {
        HrBand::Low => "low arousal",
        HrBand::Normal => "calm baseline",
        HrBand::Elevated => "mild arousal",
        HrBand::High => "strong arousal",
    };
    let rr = match state.tokens.rr_band {
        RrBand::Slow => "deep, slow breathing",
        RrBand::Normal => "normal breathing",
        RrBand::Fast => "rapid breathing, physical activation",
    };
    let time = match state.time_bucket {
        TimeBucket::Morning => "morning, start of day",
        TimeBucket::Day => "daytime activity period",
        TimeBucket::Evening => "evening wind-down",
        TimeBucket::LateNight => "pre-sleep period",
    };
    let temp = match TemperatureBucket::of(state.temperature_c) {
        TemperatureBucket::Cold => "cold environment",
        TemperatureBucket::Comfortable => "comfortable environment",
        TemperatureBucket::Hot => "hot environment",
    };
    let obs = |signal: &str, reading: String, interpretation: &str| Observation {
        signal: signal.into(),
        reading,
        interpretation: interpretation.into(),
    };
    let mut out = vec![
        obs("heart_rate", state.tokens.hr_band.as_str().into(), hr),
        obs("respiration", state.tokens.rr_band.as_str().into(), rr),
        obs("time", state.clock_time.to_string(), time),
        obs("temperature", format!("{:.1} C", state.temperature_c), temp),
        obs("status", state.user_status.clone(), if state.is_resting() { "at rest" } else { "engaged" }),
    ];
    if let Some(lead) = state.prev_instrumentation.first() {
        out.push(obs("previous_instrument", lead.to_string(), "keep timbre if it suits the intent"));
    }
    out
}

/// Deterministic rule planner. With `prev` and an unchanged state the
/// previous plan is returned as is.
pub fn plan(state: &UserState, prev: Option<&MusicPlan>, seed: u64) -> (MusicPlan, ReasoningTrace) {
    let intent = choose_intent(state);
    let rr = state.tokens.rr_band;
    let hr = state.tokens.hr_band;
    let tempo_raw = base_tempo(intent) + rr_tempo_offset(rr) + hr_tempo_offset(hr);
    let tempo_bpm = tempo_raw.clamp(MIN_TEMPO_BPM as i32, MAX_TEMPO_BPM as i32) as u32;
    let mode = choose_mode(intent, state.time_bucket);
    let genre = choose_genre(intent, state);
    let prev_lead = prev
        .map(|p| p.lead())
        .or_else(|| state.prev_instrumentation.first().copied());
    let instrumentation = keep_lead(default_instruments(genre), prev_lead);
    let (tonic_pc, tonic_reason) = match prev {
        Some(p) => (p.tonic_pc, "held from previous plan for continuity"),
        None => (seeded_tonic(seed), "drawn from session seed"),
    };
    let intensity = choose_intensity(intent, state);

    let music = MusicPlan {
        tempo_bpm,
        genre_mood: genre,
        instrumentation,
        mode,
        tonic_pc,
        intensity,
    };
    let why = |parameter: &str, value: String, reason: String| Rationale {
        parameter: parameter.into(),
        value,
        reason,
    };
    let trace = ReasoningTrace {
        observations: observe(state),
        intent,
        parameter_rationale: vec![
            why(
                "tempo_bpm",
                tempo_bpm.to_string(),
                format!(
                    "{} base {} {:+} for {} respiration {:+} for {} heart rate",
                    intent,
                    base_tempo(intent),
                    rr_tempo_offset(rr),
                    rr.as_str(),
                    hr_tempo_offset(hr),
                    hr.as_str()
                ),
            ),
            why("genre_mood", genre.to_string(), format!("{intent} in {} context", state.time_bucket.as_str())),
            why(
                "instrumentation",
                music.instrumentation.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(","),
                match prev_lead {
                    Some(l) if music.lead() == l => format!("{genre} ensemble, keeping {l} as lead"),
                    _ => format!("{genre} ensemble"),
                },
            ),
            why("mode", mode.to_string(), format!("{intent} maps to {mode}")),
            why("tonic_pc", tonic_pc.to_string(), tonic_reason.into()),
            why("intensity", format!("{intensity:.2}"), format!("{intent} level adjusted for heart rate and temperature")),
        ],
        origin: PlanOrigin::Rules,
    };
    match prev {
        Some(p) if *p == music => (p.clone(), trace),
        _ => (music, trace),
    }
}

// ── Prompt text ────────────────────────────────────────────────────────────

/// slow < 70 ≤ moderate ≤ 110 < fast.
pub fn tempo_word(tempo_bpm: u32) -> &'static str {
    if tempo_bpm < 70 {
        "slow"
    } else if tempo_bpm <= 110 {
        "moderate"
    } else {
        "fast"
    }
}

/// `"<tempo-word> <instruments> melody (style: <genre>) at <bpm> BPM for <use>, <Mode> mode"`.
/// Multiple instruments are joined with `" and "`.
pub fn render_prompt(plan: &MusicPlan) -> String {
    let instruments = plan
        .instrumentation
        .iter()
        .map(|i| i.as_str())
        .collect::<Vec<_>>()
        .join(" and ");
    format!(
        "{} {} melody (style: {}) at {} BPM for {}, {} mode",
        tempo_word(plan.tempo_bpm),
        instruments,
        plan.genre_mood,
        plan.tempo_bpm,
        plan.genre_mood.use_case(),
        plan.mode
    )
}

/// Prompt-visible plan fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFields {
    pub tempo_bpm: u32,
    pub instrumentation: Vec<Instrument>,
    pub genre_mood: Genre,
    pub mode: PentatonicMode,
}

impl From<&MusicPlan> for PromptFields {
    fn from(p: &MusicPlan) -> Self {
        Self {
            tempo_bpm: p.tempo_bpm,
            instrumentation: p.instrumentation.clone(),
            genre_mood: p.genre_mood,
            mode: p.mode,
        }
    }
}

pub fn parse_prompt(text: &str) -> Result<PromptFields> {
    let bad = |what: &str| Error::Format(format!("prompt {text:?}: {what}"));
    let (head, rest) = text.split_once(" melody (style: ").ok_or_else(|| bad("missing melody clause"))?;
    let (word, instruments) = head.split_once(' ').ok_or_else(|| bad("missing instruments"))?;
    let (genre, rest) = rest.split_once(") at ").ok_or_else(|| bad("missing style"))?;
    let (bpm, rest) = rest.split_once(" BPM for ").ok_or_else(|| bad("missing BPM"))?;
    let (use_case, mode) = rest.rsplit_once(", ").ok_or_else(|| bad("missing mode"))?;
    let mode = mode.strip_suffix(" mode").ok_or_else(|| bad("missing mode suffix"))?;

    let tempo_bpm: u32 = bpm.parse().map_err(|_| bad("tempo is not an integer"))?;
    let genre_mood: Genre = genre.parse()?;
    let instrumentation = instruments
        .split(" and ")
        .map(str::parse)
        .collect::<Result<Vec<Instrument>>>()?;
    if word != tempo_word(tempo_bpm) {
        return Err(bad("tempo word disagrees with BPM"));
    }
    if use_case != genre_mood.use_case() {
        return Err(bad("use case disagrees with style"));
    }
    Ok(PromptFields {
        tempo_bpm,
        instrumentation,
        genre_mood,
        mode: mode.parse()?,
    })
}

// ── Validation ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedPlan {
    pub plan: MusicPlan,
    /// Set when the tempo was outside 40–180 and clamped.
    pub tempo_clamped: bool,
    /// Optional free-form trace supplied alongside the plan.
    pub trace: Option<Value>,
}

/// Checks a raw plan object. Every offending field is reported; an
/// out-of-range tempo is clamped rather than rejected.
pub fn validate_plan(raw: &Value) -> Result<ValidatedPlan> {
    let obj = raw.as_object().ok_or_else(|| Error::Validation {
        fields: vec!["<root>".into()],
        messages: vec!["plan must be a JSON object".into()],
    })?;
    let mut fields = Vec::new();
    let mut messages = Vec::new();
    let mut fail = |field: &str, msg: String| {
        fields.push(field.to_string());
        messages.push(format!("{field}: {msg}"));
    };

    let mut tempo_clamped = false;
    let tempo = match obj.get("tempo_bpm").and_then(Value::as_f64) {
        Some(t) if t.is_finite() => {
            let c = t.round().clamp(MIN_TEMPO_BPM as f64, MAX_TEMPO_BPM as f64);
            tempo_clamped = c != t.round();
            Some(c as u32)
        }
        Some(_) => {
            fail("tempo_bpm", "not finite".into());
            None
        }
        None => {
            fail("tempo_bpm", "missing or not a number".into());
            None
        }
    };
    let genre = match obj.get("genre_mood").and_then(Value::as_str) {
        Some(s) => s.parse::<Genre>().map_err(|e| fail("genre_mood", e.to_string())).ok(),
        None => {
            fail("genre_mood", "missing or not a string".into());
            None
        }
    };
    let instrumentation = match obj.get("instrumentation").and_then(Value::as_array) {
        Some(items) if (1..=MAX_INSTRUMENTS).contains(&items.len()) => {
            let parsed: Option<Vec<Instrument>> = items
                .iter()
                .map(|v| v.as_str().and_then(|s| s.parse().ok()))
                .collect();
            if parsed.is_none() {
                fail("instrumentation", "unknown instrument".into());
            }
            parsed
        }
        Some(items) => {
            fail("instrumentation", format!("needs 1 to {MAX_INSTRUMENTS} entries, got {}", items.len()));
            None
        }
        None => {
            fail("instrumentation", "missing or not an array".into());
            None
        }
    };
    let mode = match obj.get("mode").and_then(Value::as_str) {
        Some(s) => s.parse::<PentatonicMode>().map_err(|e| fail("mode", e.to_string())).ok(),
        None => {
            fail("mode", "missing or not a string".into());
            None
        }
    };
    let tonic = match obj.get("tonic_pc").and_then(Value::as_u64) {
        Some(t) if t <= 11 => Some(t as u8),
        Some(t) => {
            fail("tonic_pc", format!("{t} not in 0..=11"));
            None
        }
        None => {
            fail("tonic_pc", "missing or not a non-negative integer".into());
            None
        }
    };
    let intensity = match obj.get("intensity").and_then(Value::as_f64) {
        Some(x) if (0.0..=1.0).contains(&x) => Some(x),
        Some(x) => {
            fail("intensity", format!("{x} not in [0, 1]"));
            None
        }
        None => {
            fail("intensity", "missing or not a number".into());
            None
        }
    };

    match (tempo, genre, instrumentation, mode, tonic, intensity) {
        (Some(tempo_bpm), Some(genre_mood), Some(instrumentation), Some(mode), Some(tonic_pc), Some(intensity))
            if fields.is_empty() =>
        {
            Ok(ValidatedPlan {
                plan: MusicPlan {
                    tempo_bpm,
                    genre_mood,
                    instrumentation,
                    mode,
                    tonic_pc,
                    intensity,
                },
                tempo_clamped,
                trace: obj.get("trace").cloned(),
            })
        }
        _ => Err(Error::Validation { fields, messages }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{build_user_state, VitalTokens};
    use serde_json::json;

    fn state(hr: HrBand, rr: RrBand, time: &str, status: &str) -> UserState {
        build_user_state(VitalTokens { hr_band: hr, rr_band: rr }, time, 22.0, status, None).unwrap()
    }

    #[test]
    fn calm_state_row() {
        let (p, t) = plan(&state(HrBand::Low, RrBand::Slow, "22:00", "resting"), None, 1);
        assert_eq!(p.mode, PentatonicMode::Gong);
        assert_eq!(p.genre_mood, Genre::Ambient);
        assert!(p.tempo_bpm <= 70);
        assert_eq!(t.intent, Intent::Relaxation);
    }

    #[test]
    fn fast_breathing_row() {
        let fast = plan(&state(HrBand::Normal, RrBand::Fast, "14:00", "working"), None, 1).0;
        let normal = plan(&state(HrBand::Normal, RrBand::Normal, "14:00", "working"), None, 1).0;
        assert!(fast.tempo_bpm > normal.tempo_bpm);
        assert_eq!(fast.mode, PentatonicMode::Zhi);
        assert_eq!(fast.genre_mood, Genre::Percussive);
        assert!(fast.instrumentation.contains(&Instrument::Percussion));
    }

    #[test]
    fn late_night_elevated_row() {
        let (p, t) = plan(&state(HrBand::Elevated, RrBand::Normal, "23:10", "resting"), None, 1);
        assert_eq!(t.intent, Intent::SleepTransition);
        assert_eq!(tempo_word(p.tempo_bpm), "moderate");
        assert!(matches!(p.genre_mood, Genre::Lullaby | Genre::Classical | Genre::Ambient));
    }

    #[test]
    fn paper_prompt_example() {
        let p = MusicPlan {
            tempo_bpm: 60,
            genre_mood: Genre::Classical,
            instrumentation: vec![Instrument::Erhu],
            mode: PentatonicMode::Gong,
            tonic_pc: 0,
            intensity: 0.2,
        };
        assert_eq!(render_prompt(&p), "slow erhu melody (style: classical) at 60 BPM for meditation, Gong mode");
    }

    #[test]
    fn tempo_words() {
        assert_eq!(tempo_word(69), "slow");
        assert_eq!(tempo_word(70), "moderate");
        assert_eq!(tempo_word(110), "moderate");
        assert_eq!(tempo_word(111), "fast");
        assert_eq!(tempo_word(150), "fast");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_prompt("hello").is_err());
        assert!(parse_prompt("slow erhu melody (style: classical) at 150 BPM for meditation, Gong mode").is_err());
        assert!(parse_prompt("slow erhu melody (style: classical) at 60 BPM for meditation, Dorian mode").is_err());
    }

    #[test]
    fn validate_rows() {
        let good = json!({"tempo_bpm":72,"genre_mood":"folk","instrumentation":["dizi"],"mode":"Shang","tonic_pc":2,"intensity":0.5});
        let v = validate_plan(&good).unwrap();
        assert!(!v.tempo_clamped);
        assert_eq!(serde_json::to_value(&v.plan).unwrap(), good);

        let mut dorian = good.clone();
        dorian["mode"] = json!("Dorian");
        match validate_plan(&dorian) {
            Err(Error::Validation { fields, .. }) => assert_eq!(fields, vec!["mode"]),
            other => panic!("{other:?}"),
        }

        let mut fast = good.clone();
        fast["tempo_bpm"] = json!(300);
        let v = validate_plan(&fast).unwrap();
        assert_eq!(v.plan.tempo_bpm, 180);
        assert!(v.tempo_clamped);

        match validate_plan(&json!({"tempo_bpm":60,"mode":"Yu","tonic_pc":12})) {
            Err(Error::Validation { fields, .. }) => {
                assert_eq!(fields, vec!["genre_mood", "instrumentation", "tonic_pc", "intensity"])
            }
            other => panic!("{other:?}"),
        }
        assert!(validate_plan(&json!([1, 2])).is_err());
    }
}
