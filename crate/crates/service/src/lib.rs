//! Session orchestration for the bio-adaptive music loop.
//!
//! - [`engine`]: the replanning state machine and headless runner.
//! - [`event`]: event and client-frame schemas (`"v": 1`).
//! - [`log`]: JSONL session logs and replay.
//! - [`external`]: external planner client with rule fallback.
//! - [`timeline`]: segment playback with crossfades.
//! - [`server`]: WebSocket `/session`, `/health` and `/segments/<id>.wav`.

pub mod config;
pub mod engine;
pub mod error;
pub mod event;
pub mod external;
pub mod log;
pub mod server;
pub mod timeline;

pub use config::{PlannerBackend, ScriptPhase, SessionConfig, SessionContext, Source};
pub use engine::{run_session, Session, SessionRun, TimedInput};
pub use error::{Result, ServiceError};
pub use event::{ClientFrame, EndReason, Payload, PlanEvent, PlanKind, SegmentRef, SessionEvent};
