//! Discrete physiological tokens and the planner's input state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::planner::Instrument;
use crate::vitals::VitalsEstimate;

pub const HR_HYSTERESIS_BPM: f64 = 3.0;
pub const RR_HYSTERESIS_RPM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HrBand {
    Low,
    Normal,
    Elevated,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RrBand {
    Slow,
    Normal,
    Fast,
}

impl HrBand {
    pub const ALL: [HrBand; 4] = [HrBand::Low, HrBand::Normal, HrBand::Elevated, HrBand::High];

    pub fn as_str(self) -> &'static str {
        match self {
            HrBand::Low => "low",
            HrBand::Normal => "normal",
            HrBand::Elevated => "elevated",
            HrBand::High => "high",
        }
    }
}

impl RrBand {
    pub const ALL: [RrBand; 3] = [RrBand::Slow, RrBand::Normal, RrBand::Fast];

    pub fn as_str(self) -> &'static str {
        match self {
            RrBand::Slow => "slow",
            RrBand::Normal => "normal",
            RrBand::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VitalTokens {
    pub hr_band: HrBand,
    pub rr_band: RrBand,
}

// ── Thresholds ─────────────────────────────────────────────────────────────

/// A boundary between band `i` and `i + 1`. `inclusive_below` means a value
/// equal to the threshold still belongs to the lower band.
struct Boundary {
    at: f64,
    inclusive_below: bool,
}

// low < 55 ≤ normal < 80 ≤ elevated ≤ 100 < high
const HR_BOUNDARIES: [Boundary; 3] = [
    Boundary { at: 55.0, inclusive_below: false },
    Boundary { at: 80.0, inclusive_below: false },
    Boundary { at: 100.0, inclusive_below: true },
];

// slow < 10 ≤ normal ≤ 18 < fast
const RR_BOUNDARIES: [Boundary; 2] = [
    Boundary { at: 10.0, inclusive_below: false },
    Boundary { at: 18.0, inclusive_below: true },
];

/// Band index for `x`. With a previous band, boundaries above it move up
/// by `margin` and boundaries below it move down, so leaving the band needs
/// an overshoot.
fn band_index(x: f64, boundaries: &[Boundary], prev: Option<usize>, margin: f64) -> usize {
    if x.is_nan() {
        return prev.unwrap_or(1);
    }
    boundaries
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            let shift = match prev {
                Some(p) if *i >= p => margin,
                Some(_) => -margin,
                None => 0.0,
            };
            let at = b.at + shift;
            if b.inclusive_below {
                x > at
            } else {
                x >= at
            }
        })
        .count()
}

pub fn hr_band(hr_bpm: f64, prev: Option<HrBand>) -> HrBand {
    HrBand::ALL[band_index(hr_bpm, &HR_BOUNDARIES, prev.map(|b| b as usize), HR_HYSTERESIS_BPM)]
}

pub fn rr_band(rr_rpm: f64, prev: Option<RrBand>) -> RrBand {
    RrBand::ALL[band_index(rr_rpm, &RR_BOUNDARIES, prev.map(|b| b as usize), RR_HYSTERESIS_RPM)]
}

pub fn discretize_rates(hr_bpm: f64, rr_rpm: f64, prev: Option<VitalTokens>) -> VitalTokens {
    VitalTokens {
        hr_band: hr_band(hr_bpm, prev.map(|p| p.hr_band)),
        rr_band: rr_band(rr_rpm, prev.map(|p| p.rr_band)),
    }
}

/// Maps a vitals estimate to tokens. Out-of-range rates land in the extreme
/// bands.
pub fn discretize(vitals: &VitalsEstimate, prev: Option<VitalTokens>) -> VitalTokens {
    discretize_rates(vitals.heart.rate_per_min, vitals.resp.rate_per_min, prev)
}

// ── Clock and context ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime {
    pub hour: u8,
    pub minute: u8,
}

impl ClockTime {
    pub fn new(hour: u8, minute: u8) -> Result<Self> {
        if hour > 23 || minute > 59 {
            return Err(Error::invalid(format!("clock time {hour}:{minute} out of range")));
        }
        Ok(Self { hour, minute })
    }

    pub fn minutes(self) -> u32 {
        self.hour as u32 * 60 + self.minute as u32
    }

    pub fn from_minutes(m: u32) -> Self {
        let m = m % (24 * 60);
        Self {
            hour: (m / 60) as u8,
            minute: (m % 60) as u8,
        }
    }

    /// Clock time `seconds` after `self`, wrapping at midnight.
    pub fn advanced_by(self, seconds: f64) -> Self {
        Self::from_minutes(self.minutes() + (seconds.max(0.0) / 60.0).floor() as u32)
    }
}

impl FromStr for ClockTime {
    type Err = Error;

    /// Accepts `H:MM` or `HH:MM`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed clock time {s:?}, expected HH:MM"));
        let (h, m) = s.split_once(':').ok_or_else(bad)?;
        let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
        if !(digits(h) && h.len() <= 2 && digits(m) && m.len() == 2) {
            return Err(bad());
        }
        Self::new(h.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour, self.minute)
    }
}

impl Serialize for ClockTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    Morning,
    Day,
    Evening,
    LateNight,
}

impl TimeBucket {
    pub const ALL: [TimeBucket; 4] = [TimeBucket::Morning, TimeBucket::Day, TimeBucket::Evening, TimeBucket::LateNight];

    /// Half-open intervals: morning [05:00, 11:00), day [11:00, 18:00),
    /// evening [18:00, 22:30), late night [22:30, 05:00).
    pub fn of(clock: ClockTime) -> Self {
        match clock.minutes() {
            300..=659 => TimeBucket::Morning,
            660..=1079 => TimeBucket::Day,
            1080..=1349 => TimeBucket::Evening,
            _ => TimeBucket::LateNight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeBucket::Morning => "morning",
            TimeBucket::Day => "day",
            TimeBucket::Evening => "evening",
            TimeBucket::LateNight => "late_night",
        }
    }
}

/// Tokens plus environmental context. Serializes to the flat planner wire
/// object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    #[serde(flatten)]
    pub tokens: VitalTokens,
    #[serde(rename = "time")]
    pub clock_time: ClockTime,
    pub time_bucket: TimeBucket,
    #[serde(rename = "temp_c")]
    pub temperature_c: f64,
    #[serde(rename = "status")]
    pub user_status: String,
    /// Empty when there is no previous choice.
    #[serde(rename = "prev_instruments", default)]
    pub prev_instrumentation: Vec<Instrument>,
}

impl UserState {
    /// Checks bucket consistency and a finite temperature; used on states
    /// arriving over the wire.
    pub fn validate(&self) -> Result<()> {
        if !self.temperature_c.is_finite() {
            return Err(Error::invalid("temperature must be finite"));
        }
        if TimeBucket::of(self.clock_time) != self.time_bucket {
            return Err(Error::invalid(format!(
                "time bucket {} does not match clock {}",
                self.time_bucket.as_str(),
                self.clock_time
            )));
        }
        Ok(())
    }

    pub fn is_resting(&self) -> bool {
        self.user_status.eq_ignore_ascii_case("resting")
    }
}

pub fn build_user_state(
    tokens: VitalTokens,
    clock_time: &str,
    temperature_c: f64,
    user_status: &str,
    prev_instrumentation: Option<Vec<Instrument>>,
) -> Result<UserState> {
    let clock: ClockTime = clock_time.parse()?;
    let state = UserState {
        tokens,
        clock_time: clock,
        time_bucket: TimeBucket::of(clock),
        temperature_c,
        user_status: user_status.to_string(),
        prev_instrumentation: prev_instrumentation.unwrap_or_default(),
    };
    state.validate()?;
    Ok(state)
}
