//! HTTP/WebSocket front end.
//!
//! - `GET /session` upgrades to a WebSocket running one isolated session.
//!   Query parameters: `seed`, `speed` (simulated seconds per wall second),
//!   `source` (`live` or `script`), `hr_bpm`/`rr_rpm` (initial live rates),
//!   `phase_s` (script phase length), `time`, `temp_c`, `status`,
//!   `replan_s`, `duration_s` and `inline` (base64 audio in segment frames).
//! - `GET /health` answers `{"status":"ok"}`.
//! - `GET /segments/<id>.wav` serves rendered segments.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use biotone_core::state::ClockTime;

use crate::config::{PlannerBackend, SessionConfig, SessionContext, Source};
use crate::engine::{render_segment, RenderJob, RenderedSegment, Session, RENDER_QUEUE};
use crate::error::{Result, ServiceError};
use crate::event::{ClientFrame, EndReason, Payload, SessionEvent};

/// Settings shared by every session the server starts.
#[derive(Debug, Clone)]
pub struct ServerDefaults {
    pub replan_interval_s: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub crossfade_s: f64,
    pub planner: PlannerBackend,
    pub context: SessionContext,
    pub speed: f64,
}

impl Default for ServerDefaults {
    fn default() -> Self {
        let base = SessionConfig::new(0, Source::resting_live());
        Self {
            replan_interval_s: base.replan_interval_s,
            window_s: base.window_s,
            hop_s: base.hop_s,
            crossfade_s: base.crossfade_s,
            planner: base.planner,
            context: base.context,
            speed: 1.0,
        }
    }
}

pub struct AppState {
    pub defaults: ServerDefaults,
    segments: RwLock<HashMap<String, Arc<Vec<u8>>>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(defaults: ServerDefaults) -> Arc<Self> {
        Arc::new(Self {
            defaults,
            segments: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(0),
        })
    }

    pub fn segment(&self, id: &str) -> Option<Arc<Vec<u8>>> {
        self.segments.read().expect("segment store poisoned").get(id).cloned()
    }

    fn store(&self, id: String, wav: Vec<u8>) {
        self.segments.write().expect("segment store poisoned").insert(id, Arc::new(wav));
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/segments/{file}", get(segment_wav))
        .route("/session", get(session_ws))
        .with_state(state)
}

/// Binds `addr`; failure to bind is a startup error.
pub async fn bind(addr: &str) -> Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}

pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> Result<()> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn segment_wav(State(state): State<Arc<AppState>>, Path(file): Path<String>) -> Response {
    let Some(id) = file.strip_suffix(".wav") else {
        return (StatusCode::NOT_FOUND, "segments are served as <id>.wav").into_response();
    };
    match state.segment(id) {
        Some(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes.as_ref().clone()).into_response(),
        None => (StatusCode::NOT_FOUND, format!("no segment {id}")).into_response(),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct SessionQuery {
    pub seed: Option<u64>,
    pub speed: Option<f64>,
    pub source: Option<String>,
    pub hr_bpm: Option<f64>,
    pub rr_rpm: Option<f64>,
    pub phase_s: Option<f64>,
    pub time: Option<String>,
    pub temp_c: Option<f64>,
    pub status: Option<String>,
    pub replan_s: Option<f64>,
    pub duration_s: Option<f64>,
    pub inline: Option<bool>,
}

impl SessionQuery {
    fn config(&self, defaults: &ServerDefaults, session_id: String) -> Result<SessionConfig> {
        let source = match self.source.as_deref().unwrap_or("live") {
            "live" => Source::Live {
                hr_bpm: self.hr_bpm.unwrap_or(60.0),
                rr_rpm: self.rr_rpm.unwrap_or(15.0),
            },
            "script" => Source::rest_active_rest(self.phase_s.unwrap_or(60.0)),
            other => return Err(ServiceError::Config(format!("unknown source {other:?}, expected live or script"))),
        };
        let mut context = defaults.context.clone();
        if let Some(t) = &self.time {
            context.time = t.parse::<ClockTime>()?;
        }
        if let Some(t) = self.temp_c {
            context.temp_c = t;
        }
        if let Some(s) = &self.status {
            context.status = s.clone();
        }
        let config = SessionConfig {
            replan_interval_s: self.replan_s.unwrap_or(defaults.replan_interval_s),
            window_s: defaults.window_s,
            hop_s: defaults.hop_s,
            crossfade_s: defaults.crossfade_s,
            seed: self.seed.unwrap_or(0),
            source,
            context,
            planner: defaults.planner.clone(),
            session_id,
        };
        config.validate()?;
        Ok(config)
    }
}

async fn session_ws(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>, Query(query): Query<SessionQuery>) -> Response {
    ws.on_upgrade(move |socket| run_socket(socket, state, query))
}

async fn send(socket: &mut WebSocket, event: &SessionEvent) -> bool {
    socket.send(Message::Text(event.to_json_line().into())).await.is_ok()
}

fn error_event(t: f64, message: impl Into<String>) -> SessionEvent {
    SessionEvent::new(t, Payload::Error { message: message.into() })
}

async fn run_socket(mut socket: WebSocket, state: Arc<AppState>, query: SessionQuery) {
    let conn = state.next_session.fetch_add(1, Ordering::Relaxed);
    let speed = query.speed.unwrap_or(state.defaults.speed);
    let setup = if speed.is_finite() && speed > 0.0 {
        query
            .config(&state.defaults, format!("s{conn}"))
            .and_then(Session::new)
    } else {
        Err(ServiceError::Config(format!("speed must be positive, got {speed}")))
    };
    let mut session = match setup {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, &error_event(0.0, e.to_string())).await;
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    };
    let inline = query.inline.unwrap_or(false);
    let duration_s = query.duration_s.unwrap_or(f64::INFINITY);
    let blocking_planner = matches!(session.config().planner, PlannerBackend::External { .. });

    let (job_tx, mut job_rx) = mpsc::channel::<RenderJob>(RENDER_QUEUE);
    let (done_tx, mut done_rx) = mpsc::unbounded_channel::<Result<RenderedSegment>>();
    let worker = tokio::spawn(async move {
        while let Some(job) = job_rx.recv().await {
            let result = tokio::task::spawn_blocking(move || render_segment(&job))
                .await
                .unwrap_or_else(|e| Err(ServiceError::Worker(e.to_string())));
            if done_tx.send(result).is_err() {
                break;
            }
        }
    });

    if !send(&mut socket, &session.start_event()).await {
        return;
    }
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(session.config().hop_s / speed));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;

    // Plans fire on schedule even when rendering lags; jobs wait here.
    let mut backlog: VecDeque<RenderJob> = VecDeque::new();
    let mut in_flight = 0usize;
    let mut ending: Option<EndReason> = None;

    loop {
        while let Some(job) = backlog.pop_front() {
            match job_tx.try_send(job) {
                Ok(()) => in_flight += 1,
                Err(mpsc::error::TrySendError::Full(job)) => {
                    backlog.push_front(job);
                    break;
                }
                Err(mpsc::error::TrySendError::Closed(_)) => {
                    ending = Some(EndReason::ClientClosed);
                    break;
                }
            }
        }
        if let Some(reason) = ending {
            if reason == EndReason::ClientClosed || (backlog.is_empty() && in_flight == 0) {
                if reason != EndReason::ClientClosed {
                    send(&mut socket, &session.end_event(reason)).await;
                    let _ = socket.send(Message::Close(None)).await;
                }
                break;
            }
        }

        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let event = match ClientFrame::parse(text.as_str()) {
                        Ok(frame) => session.apply(frame),
                        Err(e) => error_event(session.now_s(), e.to_string()),
                    };
                    if !send(&mut socket, &event).await {
                        ending = Some(EndReason::ClientClosed);
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    if !send(&mut socket, &error_event(session.now_s(), "binary frames are not supported")).await {
                        ending = Some(EndReason::ClientClosed);
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => ending = Some(EndReason::ClientClosed),
                Some(Ok(_)) => {}
            },
            _ = ticker.tick(), if ending.is_none() => {
                let next = session.next_tick_s();
                if next.is_some_and(|t| t > duration_s) {
                    ending = Some(EndReason::DurationReached);
                    continue;
                }
                let step = if blocking_planner {
                    tokio::task::block_in_place(|| session.tick())
                } else {
                    session.tick()
                };
                match step {
                    None => ending = Some(EndReason::SourceExhausted),
                    Some(step) => {
                        for e in &step.events {
                            if !send(&mut socket, e).await {
                                ending = Some(EndReason::ClientClosed);
                                break;
                            }
                        }
                        backlog.extend(step.render);
                    }
                }
            },
            Some(done) = done_rx.recv(), if in_flight > 0 => {
                in_flight -= 1;
                let event = match done {
                    Ok(seg) => {
                        let reference = seg.reference(inline);
                        state.store(seg.segment.id.clone(), seg.wav);
                        // Stamped when ready; `scheduled_s` keeps the plan time.
                        SessionEvent::new(session.now_s().max(reference.scheduled_s), Payload::Segment(reference))
                    }
                    Err(e) => error_event(session.now_s(), format!("render failed: {e}")),
                };
                if !send(&mut socket, &event).await {
                    ending = Some(EndReason::ClientClosed);
                }
            },
        }
    }
    drop(job_tx);
    worker.abort();
}
