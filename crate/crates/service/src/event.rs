//! Wire schemas: session events (server → client, also the log format) and
//! client frames. Every object carries `"v": 1`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use biotone_core::pentatonic::PentatonicMode;
use biotone_core::planner::{Instrument, MusicPlan, ReasoningTrace};
use biotone_core::state::{ClockTime, UserState};
use biotone_core::vitals::VitalsLine;

use crate::config::SessionConfig;
use crate::error::{Result, ServiceError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub v: u32,
    pub timestamp_s: f64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl SessionEvent {
    pub fn new(timestamp_s: f64, payload: Payload) -> Self {
        Self {
            v: SCHEMA_VERSION,
            timestamp_s,
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.payload {
            Payload::SessionStart { .. } => "session_start",
            Payload::Input { .. } => "input",
            Payload::Vitals(_) => "vitals",
            Payload::State(_) => "state",
            Payload::Plan(_) => "plan",
            Payload::Segment(_) => "segment",
            Payload::SessionEnd { .. } => "session_end",
            Payload::Error { .. } => "error",
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("session events always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    SessionStart { config: SessionConfig },
    /// A client frame, stamped with the session time it took effect after.
    Input { frame: ClientFrame },
    Vitals(VitalsLine),
    State(UserState),
    Plan(PlanEvent),
    Segment(SegmentRef),
    SessionEnd { reason: EndReason },
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    /// First plan of the session.
    Initial,
    /// Differs from the previous plan; a new segment follows.
    Changed,
    /// Re-planned with an identical result; no new audio.
    Held,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub kind: PlanKind,
    pub plan: MusicPlan,
    pub trace: ReasoningTrace,
    pub prompt: String,
}

/// A rendered audio segment, served by reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub id: String,
    pub url: String,
    pub bpm: u32,
    pub mode: PentatonicMode,
    pub tonic_pc: u8,
    pub instrument: Instrument,
    pub index: u64,
    pub seed: u64,
    /// Session time the segment was scheduled to start (its plan's time).
    pub scheduled_s: f64,
    /// Overlap with the previous segment; zero for the first one.
    pub crossfade_s: f64,
    /// Length of one pass through the segment, excluding the release tail.
    pub loop_s: f64,
    pub duration_s: f64,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav_base64: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    SourceExhausted,
    DurationReached,
    ClientClosed,
}

/// Client → server frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    VitalsOverride {
        hr_bpm: f64,
        rr_rpm: f64,
    },
    Context {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<ClockTime>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temp_c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<String>,
    },
    Pause,
    Resume,
}

impl ClientFrame {
    /// Parses a text frame. `"v"` may be omitted; any other version is
    /// rejected, as are unknown types and fields.
    pub fn parse(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ServiceError::Frame(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| ServiceError::Frame("frame must be a JSON object".into()))?;
        if let Some(v) = obj.remove("v") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(ServiceError::Frame(format!("unsupported schema version {v}")));
            }
        }
        let frame: ClientFrame = serde_json::from_value(value.clone()).map_err(|e| ServiceError::Frame(e.to_string()))?;
        // Unit variants ignore `deny_unknown_fields`, so compare keys directly.
        let known = serde_json::to_value(&frame).map_err(|e| ServiceError::Frame(e.to_string()))?;
        if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
            if let Some((key, _)) = given.iter().find(|(k, v)| !v.is_null() && !known.contains_key(*k)) {
                return Err(ServiceError::Frame(format!("unknown field `{key}`")));
            }
        }
        frame.check()?;
        Ok(frame)
    }

    fn check(&self) -> Result<()> {
        match self {
            ClientFrame::VitalsOverride { hr_bpm, rr_rpm } => {
                if !(hr_bpm.is_finite() && rr_rpm.is_finite() && *hr_bpm > 0.0 && *rr_rpm > 0.0) {
                    return Err(ServiceError::Frame("override rates must be positive and finite".into()));
                }
            }
            ClientFrame::Context { temp_c: Some(t), .. } if !t.is_finite() => {
                return Err(ServiceError::Frame("temperature must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// The frame as sent on the wire, with its version field.
    pub fn to_wire(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("client frames always serialize");
        v["v"] = SCHEMA_VERSION.into();
        v
    }
}
