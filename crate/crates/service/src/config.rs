use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use biotone_core::melody::BEATS_PER_BAR;
use biotone_core::planner::MAX_TEMPO_BPM;
use biotone_core::state::ClockTime;
use biotone_core::vitals::{Estimator, MIN_WINDOW_S};

use crate::error::{Result, ServiceError};

pub const DEFAULT_REPLAN_INTERVAL_S: f64 = 10.0;
pub const DEFAULT_CROSSFADE_S: f64 = 2.0;
pub const DEFAULT_WINDOW_S: f64 = 30.0;
pub const DEFAULT_HOP_S: f64 = 5.0;
/// Segments are fixed four-bar units.
pub const SEGMENT_BARS: usize = 4;

/// Shortest possible segment: four bars at the fastest tempo.
pub fn min_segment_s() -> f64 {
    SEGMENT_BARS as f64 * BEATS_PER_BAR * 60.0 / MAX_TEMPO_BPM as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptPhase {
    pub label: String,
    pub hr_bpm: f64,
    pub rr_rpm: f64,
    pub duration_s: f64,
}

impl ScriptPhase {
    pub fn new(label: &str, hr_bpm: f64, rr_rpm: f64, duration_s: f64) -> Self {
        Self {
            label: label.into(),
            hr_bpm,
            rr_rpm,
            duration_s,
        }
    }
}

/// Where vitals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// Piecewise-constant rates, reported directly once per hop.
    Script { phases: Vec<ScriptPhase> },
    /// A recorded phase trace (CSV) run through the vitals tracker.
    Trace {
        path: PathBuf,
        wavelength_mm: f64,
        #[serde(default)]
        estimator: Estimator,
    },
    /// Constant rates until a client override changes them.
    Live { hr_bpm: f64, rr_rpm: f64 },
}

impl Source {
    /// Rest (15 rpm / 60 bpm) → active (22 rpm / 95 bpm) → rest, `phase_s`
    /// seconds each.
    pub fn rest_active_rest(phase_s: f64) -> Self {
        Source::Script {
            phases: vec![
                ScriptPhase::new("rest", 60.0, 15.0, phase_s),
                ScriptPhase::new("active", 95.0, 22.0, phase_s),
                ScriptPhase::new("rest", 60.0, 15.0, phase_s),
            ],
        }
    }

    pub fn resting_live() -> Self {
        Source::Live {
            hr_bpm: 60.0,
            rr_rpm: 15.0,
        }
    }
}

/// Environmental context fed to the planner alongside the vitals tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    /// Clock time at session start.
    pub time: ClockTime,
    pub temp_c: f64,
    pub status: String,
}

impl Default for SessionContext {
    fn default() -> Self {
        Self {
            time: ClockTime { hour: 14, minute: 0 },
            temp_c: 22.0,
            status: "resting".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerBackend {
    Rules,
    External { endpoint: String, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub replan_interval_s: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub crossfade_s: f64,
    pub seed: u64,
    pub source: Source,
    pub context: SessionContext,
    pub planner: PlannerBackend,
    /// Used to build segment URLs and ids; distinguishes concurrent sessions.
    pub session_id: String,
}

impl SessionConfig {
    pub fn new(seed: u64, source: Source) -> Self {
        Self {
            replan_interval_s: DEFAULT_REPLAN_INTERVAL_S,
            window_s: DEFAULT_WINDOW_S,
            hop_s: DEFAULT_HOP_S,
            crossfade_s: DEFAULT_CROSSFADE_S,
            seed,
            source,
            context: SessionContext::default(),
            planner: PlannerBackend::Rules,
            session_id: "session".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ServiceError::Config(msg));
        if !(self.hop_s.is_finite() && self.hop_s > 0.0) {
            return bad(format!("hop_s must be positive, got {}", self.hop_s));
        }
        if !(self.replan_interval_s >= self.hop_s) {
            return bad(format!(
                "replan_interval_s ({}) must be at least hop_s ({})",
                self.replan_interval_s, self.hop_s
            ));
        }
        if !(self.crossfade_s >= 0.0 && self.crossfade_s < min_segment_s()) {
            return bad(format!(
                "crossfade_s must be in [0, {:.3}) (shortest segment), got {}",
                min_segment_s(),
                self.crossfade_s
            ));
        }
        if !self.context.temp_c.is_finite() {
            return bad("context temperature must be finite".into());
        }
        if self.session_id.is_empty() || !self.session_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad(format!("session id {:?} must be non-empty [A-Za-z0-9_-]", self.session_id));
        }
        match &self.source {
            Source::Script { phases } => {
                if phases.is_empty() {
                    return bad("script needs at least one phase".into());
                }
                for p in phases {
                    if !(p.duration_s > 0.0 && p.hr_bpm > 0.0 && p.rr_rpm > 0.0)
                        || !(p.duration_s.is_finite() && p.hr_bpm.is_finite() && p.rr_rpm.is_finite())
                    {
                        return bad(format!("script phase {:?} needs positive finite rates and duration", p.label));
                    }
                }
            }
            Source::Trace { wavelength_mm, .. } => {
                if self.window_s < MIN_WINDOW_S || self.hop_s > self.window_s {
                    return bad(format!("trace source needs window_s >= {MIN_WINDOW_S} and hop_s <= window_s"));
                }
                if !(*wavelength_mm > 0.0) {
                    return bad("wavelength must be positive".into());
                }
            }
            Source::Live { hr_bpm, rr_rpm } => {
                if !(*hr_bpm > 0.0 && *rr_rpm > 0.0 && hr_bpm.is_finite() && rr_rpm.is_finite()) {
                    return bad("live source needs positive finite rates".into());
                }
            }
        }
        Ok(())
    }
}
