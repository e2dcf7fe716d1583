//! JSONL session logs: one [`SessionEvent`] per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::engine::{run_session, SessionRun, TimedInput};
use crate::error::{Result, ServiceError};
use crate::event::{EndReason, Payload, SessionEvent};

/// Appends one event as a line.
pub fn log_append<W: Write>(out: &mut W, event: &SessionEvent) -> Result<()> {
    out.write_all(event.to_json_line().as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_log(path: impl AsRef<Path>, events: &[SessionEvent]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for e in events {
        log_append(&mut f, e)?;
    }
    f.flush()?;
    Ok(())
}

/// Appends to an existing log file, creating it if needed.
pub fn append_to_file(path: impl AsRef<Path>, event: &SessionEvent) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    log_append(&mut f, event)
}

/// Parses a log. Blank lines are skipped; the first bad line aborts with
/// its 1-based number.
pub fn read_log<R: Read>(input: R) -> Result<Vec<SessionEvent>> {
    match read_log_prefix(input) {
        (events, None) => Ok(events),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`read_log`], but keeps the events before the first bad line.
pub fn read_log_prefix<R: Read>(input: R) -> (Vec<SessionEvent>, Option<ServiceError>) {
    let mut events = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let fail = |message: String| ServiceError::Log { line: line_no, message };
        let line = match line {
            Ok(l) => l,
            Err(e) => return (events, Some(fail(e.to_string()))),
        };
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) => return (events, Some(fail(e.to_string()))),
        };
        if event.v != crate::event::SCHEMA_VERSION {
            return (events, Some(fail(format!("unsupported schema version {}", event.v))));
        }
        if event.timestamp_s < last_t {
            return (
                events,
                Some(fail(format!("timestamp {} goes backwards (previous {last_t})", event.timestamp_s))),
            );
        }
        last_t = event.timestamp_s;
        events.push(event);
    }
    (events, None)
}

/// Reads a log file back, events and original timestamps unchanged.
pub fn replay(path: impl AsRef<Path>) -> Result<Vec<SessionEvent>> {
    read_log(File::open(path)?)
}

/// Re-runs the session a log describes: config from its start event,
/// client frames from its input events, length from its end event.
pub fn rerun(events: &[SessionEvent]) -> Result<SessionRun> {
    let config = events
        .iter()
        .find_map(|e| match &e.payload {
            Payload::SessionStart { config } => Some(config.clone()),
            _ => None,
        })
        .ok_or_else(|| ServiceError::Log {
            line: 1,
            message: "log has no session_start event".into(),
        })?;
    let inputs: Vec<TimedInput> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Input { frame } => Some(TimedInput {
                at_s: e.timestamp_s,
                frame: frame.clone(),
            }),
            _ => None,
        })
        .collect();
    let duration_s = events
        .iter()
        .find_map(|e| match &e.payload {
            Payload::SessionEnd { reason: EndReason::SourceExhausted } => Some(f64::INFINITY),
            Payload::SessionEnd { .. } => Some(e.timestamp_s),
            _ => None,
        })
        .unwrap_or_else(|| events.last().map_or(0.0, |e| e.timestamp_s));
    let inline = events.iter().any(|e| matches!(&e.payload, Payload::Segment(s) if s.wav_base64.is_some()));
    run_session(&config, duration_s, &inputs, inline)
}
