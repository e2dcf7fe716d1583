//! Client for an external planner backend (`POST /plan`).
//!
//! Any failure (network, timeout, bad JSON, failed validation) falls back to
//! the rule planner, with the reason recorded in the trace origin.

use std::time::Duration;

use serde_json::Value;

use biotone_core::planner::{self, MusicPlan, PlanOrigin, Rationale, ReasoningTrace};
use biotone_core::state::UserState;

/// Plans via `endpoint`, falling back to the rule planner on any failure.
pub fn external_plan(
    state: &UserState,
    endpoint: &str,
    timeout_ms: u64,
    prev: Option<&MusicPlan>,
    seed: u64,
) -> (MusicPlan, ReasoningTrace) {
    match request_plan(state, endpoint, timeout_ms) {
        Ok(found) => found,
        Err(reason) => {
            let (plan, mut trace) = planner::plan(state, prev, seed);
            trace.origin = PlanOrigin::Fallback { reason };
            (plan, trace)
        }
    }
}

fn request_plan(state: &UserState, endpoint: &str, timeout_ms: u64) -> Result<(MusicPlan, ReasoningTrace), String> {
    let timeout = Duration::from_millis(timeout_ms);
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .connect_timeout(timeout)
        .build()
        .map_err(|e| format!("client setup failed: {e}"))?;
    let response = client
        .post(endpoint)
        .json(state)
        .send()
        .map_err(|e| if e.is_timeout() { format!("timed out after {timeout_ms} ms") } else { format!("request failed: {e}") })?;
    if !response.status().is_success() {
        return Err(format!("backend returned HTTP {}", response.status().as_u16()));
    }
    let body = response
        .text()
        .map_err(|e| if e.is_timeout() { format!("timed out after {timeout_ms} ms") } else { format!("reading body failed: {e}") })?;
    let raw: Value = serde_json::from_str(&body).map_err(|e| format!("malformed JSON: {e}"))?;
    let checked = planner::validate_plan(&raw).map_err(|e| e.to_string())?;

    let mut rationale: Vec<Rationale> = match &checked.trace {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| Rationale {
                parameter: format!("external[{i}]"),
                value: String::new(),
                reason: match item {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                },
            })
            .collect(),
        Some(other) => vec![Rationale {
            parameter: "external".into(),
            value: String::new(),
            reason: other.to_string(),
        }],
        None => Vec::new(),
    };
    if checked.tempo_clamped {
        rationale.push(Rationale {
            parameter: "tempo_bpm".into(),
            value: checked.plan.tempo_bpm.to_string(),
            reason: "backend tempo out of range, clamped".into(),
        });
    }
    let trace = ReasoningTrace {
        observations: planner::observe(state),
        intent: planner::choose_intent(state),
        parameter_rationale: rationale,
        origin: PlanOrigin::External,
    };
    Ok((checked.plan, trace))
}
