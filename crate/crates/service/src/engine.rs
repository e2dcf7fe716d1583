//! The closed loop: vitals → tokens → state → plan → segment.
//!
//! [`Session`] is a synchronous state machine driven one vitals tick at a
//! time; it never renders audio itself but hands out [`RenderJob`]s. The
//! headless [`run_session`] and the WebSocket server both drive it.

use std::collections::BTreeMap;
use std::fs::File;
use std::sync::mpsc;
use std::thread;

use base64::Engine as _;
use sha2::{Digest, Sha256};

use biotone_core::audio::{encode_wav, render};
use biotone_core::melody::generate_for_plan;
use biotone_core::planner::{self, render_prompt, MusicPlan, ReasoningTrace};
use biotone_core::radar::read_phase_csv;
use biotone_core::state::{discretize, ClockTime, TimeBucket, UserState, VitalTokens};
use biotone_core::vitals::{track_vitals_with, TrackerConfig, VitalsEstimate};

use crate::config::{PlannerBackend, SessionConfig, Source, SEGMENT_BARS};
use crate::error::{Result, ServiceError};
use crate::event::{ClientFrame, EndReason, Payload, PlanEvent, PlanKind, SegmentRef, SessionEvent};
use crate::external::external_plan;

/// Jobs the render worker may have queued before the session blocks.
pub const RENDER_QUEUE: usize = 4;

const SEGMENT_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
const TIME_EPS: f64 = 1e-9;

/// Seed for the `index`-th segment of a session.
pub fn segment_seed(session_seed: u64, index: u64) -> u64 {
    session_seed.wrapping_add(index.wrapping_mul(SEGMENT_SEED_STRIDE))
}

pub fn segment_id(session_id: &str, index: u64) -> String {
    format!("{session_id}-{index:04}")
}

pub fn segment_url(id: &str) -> String {
    format!("/segments/{id}.wav")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderJob {
    pub session_id: String,
    pub index: u64,
    pub seed: u64,
    pub plan: MusicPlan,
    pub scheduled_s: f64,
    pub crossfade_s: f64,
}

#[derive(Debug, Clone)]
pub struct RenderedSegment {
    pub segment: SegmentRef,
    pub wav: Vec<u8>,
}

impl RenderedSegment {
    /// The segment reference, with the audio inlined when asked.
    pub fn reference(&self, inline: bool) -> SegmentRef {
        let mut r = self.segment.clone();
        if inline {
            r.wav_base64 = Some(base64::engine::general_purpose::STANDARD.encode(&self.wav));
        }
        r
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Generates and renders one four-bar segment. Pure in the job.
pub fn render_segment(job: &RenderJob) -> Result<RenderedSegment> {
    let score = generate_for_plan(&job.plan, SEGMENT_BARS, job.seed)?;
    let clip = render(&score, &job.plan)?;
    let wav = encode_wav(&clip);
    let id = segment_id(&job.session_id, job.index);
    let segment = SegmentRef {
        url: segment_url(&id),
        id,
        bpm: job.plan.tempo_bpm,
        mode: job.plan.mode,
        tonic_pc: job.plan.tonic_pc,
        instrument: job.plan.lead(),
        index: job.index,
        seed: job.seed,
        scheduled_s: job.scheduled_s,
        crossfade_s: job.crossfade_s,
        loop_s: score.beats_total * 60.0 / job.plan.tempo_bpm as f64,
        duration_s: clip.duration_s(),
        sha256: sha256_hex(&wav),
        wav_base64: None,
    };
    Ok(RenderedSegment { segment, wav })
}

// ── Vitals feed ────────────────────────────────────────────────────────────

enum Feed {
    Script { phases: Vec<(f64, f64, f64)>, total_s: f64 },
    Trace(Vec<VitalsEstimate>),
    Live,
}

impl Feed {
    fn load(config: &SessionConfig) -> Result<Self> {
        Ok(match &config.source {
            Source::Script { phases } => {
                let mut end = 0.0;
                let phases = phases
                    .iter()
                    .map(|p| {
                        end += p.duration_s;
                        (end, p.hr_bpm, p.rr_rpm)
                    })
                    .collect();
                Feed::Script { phases, total_s: end }
            }
            Source::Trace {
                path,
                wavelength_mm,
                estimator,
            } => {
                let signal = read_phase_csv(File::open(path)?, *wavelength_mm)?;
                let tracker = TrackerConfig::new(config.window_s, config.hop_s).with_estimator(*estimator);
                Feed::Trace(track_vitals_with(&signal, &tracker)?)
            }
            Source::Live { .. } => Feed::Live,
        })
    }

    /// Session time of tick `k` (1-based), if the source still has data.
    fn time_of(&self, k: usize, hop_s: f64) -> Option<f64> {
        match self {
            Feed::Script { total_s, .. } => {
                let t = k as f64 * hop_s;
                (t <= total_s + TIME_EPS).then_some(t)
            }
            Feed::Trace(estimates) => estimates.get(k - 1).map(|e| e.window_end_s),
            Feed::Live => Some(k as f64 * hop_s),
        }
    }

    fn estimate(&self, k: usize, t: f64, window_s: f64, live: (f64, f64)) -> VitalsEstimate {
        let t0 = (t - window_s).max(0.0);
        match self {
            // The phase holding the instant just before `t`.
            Feed::Script { phases, .. } => {
                let &(_, hr, rr) = phases
                    .iter()
                    .find(|(end, _, _)| t <= end + TIME_EPS)
                    .unwrap_or_else(|| phases.last().expect("validated non-empty"));
                VitalsEstimate::from_rates(hr, rr, t0, t)
            }
            Feed::Trace(estimates) => estimates[k - 1],
            Feed::Live => VitalsEstimate::from_rates(live.0, live.1, t0, t),
        }
    }
}

// ── Session ────────────────────────────────────────────────────────────────

#[derive(Debug, Default)]
pub struct TickOutcome {
    pub events: Vec<SessionEvent>,
    pub render: Option<RenderJob>,
}

pub struct Session {
    config: SessionConfig,
    feed: Feed,
    ticks: usize,
    now_s: f64,
    paused: bool,
    live_rates: (f64, f64),
    override_rates: Option<(f64, f64)>,
    clock_anchor: (f64, ClockTime),
    temp_c: f64,
    status: String,
    tokens: Option<VitalTokens>,
    planned_tokens: Option<VitalTokens>,
    last_plan_s: Option<f64>,
    plan: Option<MusicPlan>,
    segments: u64,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let feed = Feed::load(&config)?;
        let live_rates = match config.source {
            Source::Live { hr_bpm, rr_rpm } => (hr_bpm, rr_rpm),
            _ => (0.0, 0.0),
        };
        Ok(Self {
            clock_anchor: (0.0, config.context.time),
            temp_c: config.context.temp_c,
            status: config.context.status.clone(),
            feed,
            ticks: 0,
            now_s: 0.0,
            paused: false,
            live_rates,
            override_rates: None,
            tokens: None,
            planned_tokens: None,
            last_plan_s: None,
            plan: None,
            segments: 0,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn current_plan(&self) -> Option<&MusicPlan> {
        self.plan.as_ref()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn start_event(&self) -> SessionEvent {
        SessionEvent::new(0.0, Payload::SessionStart { config: self.config.clone() })
    }

    pub fn end_event(&self, reason: EndReason) -> SessionEvent {
        SessionEvent::new(self.now_s, Payload::SessionEnd { reason })
    }

    /// Time of the next tick, or `None` once the source is exhausted.
    pub fn next_tick_s(&self) -> Option<f64> {
        self.feed.time_of(self.ticks + 1, self.config.hop_s)
    }

    fn clock_at(&self, t: f64) -> ClockTime {
        self.clock_anchor.1.advanced_by(t - self.clock_anchor.0)
    }

    /// Applies a client frame. Effects show from the next tick on.
    pub fn apply(&mut self, frame: ClientFrame) -> SessionEvent {
        match &frame {
            ClientFrame::VitalsOverride { hr_bpm, rr_rpm } => self.override_rates = Some((*hr_bpm, *rr_rpm)),
            ClientFrame::Context { time, temp_c, status } => {
                if let Some(time) = time {
                    self.clock_anchor = (self.now_s, *time);
                }
                if let Some(t) = temp_c {
                    self.temp_c = *t;
                }
                if let Some(s) = status {
                    self.status = s.clone();
                }
            }
            ClientFrame::Pause => self.paused = true,
            ClientFrame::Resume => self.paused = false,
        }
        SessionEvent::new(self.now_s, Payload::Input { frame })
    }

    /// Advances one hop. Returns `None` when the source is exhausted.
    /// While paused the clock and source still advance but nothing is
    /// emitted.
    pub fn tick(&mut self) -> Option<TickOutcome> {
        let t = self.next_tick_s()?;
        self.ticks += 1;
        self.now_s = t;
        if self.paused {
            return Some(TickOutcome::default());
        }
        let mut estimate = self.feed.estimate(self.ticks, t, self.config.window_s, self.live_rates);
        if let Some((hr, rr)) = self.override_rates {
            estimate = VitalsEstimate::from_rates(hr, rr, estimate.window_start_s, estimate.window_end_s);
        }
        let tokens = discretize(&estimate, self.tokens);
        self.tokens = Some(tokens);
        let clock = self.clock_at(t);
        let state = UserState {
            tokens,
            clock_time: clock,
            time_bucket: TimeBucket::of(clock),
            temperature_c: self.temp_c,
            user_status: self.status.clone(),
            prev_instrumentation: self.plan.as_ref().map(|p| p.instrumentation.clone()).unwrap_or_default(),
        };

        let mut out = TickOutcome {
            events: vec![
                SessionEvent::new(t, Payload::Vitals(estimate.to_line())),
                SessionEvent::new(t, Payload::State(state.clone())),
            ],
            render: None,
        };
        let due = match self.last_plan_s {
            None => true,
            Some(last) => Some(tokens) != self.planned_tokens || t - last >= self.config.replan_interval_s - TIME_EPS,
        };
        if !due {
            return Some(out);
        }

        let (plan, trace) = self.make_plan(&state);
        let kind = match &self.plan {
            None => PlanKind::Initial,
            Some(prev) if *prev != plan => PlanKind::Changed,
            Some(_) => PlanKind::Held,
        };
        out.events.push(SessionEvent::new(
            t,
            Payload::Plan(PlanEvent {
                kind,
                prompt: render_prompt(&plan),
                plan: plan.clone(),
                trace,
            }),
        ));
        if kind != PlanKind::Held {
            let index = self.segments;
            out.render = Some(RenderJob {
                session_id: self.config.session_id.clone(),
                index,
                seed: segment_seed(self.config.seed, index),
                plan: plan.clone(),
                scheduled_s: t,
                crossfade_s: if index == 0 { 0.0 } else { self.config.crossfade_s },
            });
            self.segments += 1;
        }
        self.plan = Some(plan);
        self.planned_tokens = Some(tokens);
        self.last_plan_s = Some(t);
        Some(out)
    }

    fn make_plan(&self, state: &UserState) -> (MusicPlan, ReasoningTrace) {
        match &self.config.planner {
            PlannerBackend::Rules => planner::plan(state, self.plan.as_ref(), self.config.seed),
            PlannerBackend::External { endpoint, timeout_ms } => {
                external_plan(state, endpoint, *timeout_ms, self.plan.as_ref(), self.config.seed)
            }
        }
    }
}

// ── Headless runs ──────────────────────────────────────────────────────────

/// A client frame scheduled for a headless run. It takes effect before the
/// first tick strictly after `at_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedInput {
    pub at_s: f64,
    pub frame: ClientFrame,
}

#[derive(Debug, Clone)]
pub struct SessionRun {
    pub events: Vec<SessionEvent>,
    /// Segment id → WAV bytes.
    pub audio: BTreeMap<String, Vec<u8>>,
}

impl SessionRun {
    pub fn plans(&self) -> impl Iterator<Item = &PlanEvent> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Plan(p) => Some(p),
            _ => None,
        })
    }

    pub fn segments(&self) -> impl Iterator<Item = &SegmentRef> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Segment(s) => Some(s),
            _ => None,
        })
    }

    pub fn plan_changes(&self) -> usize {
        self.plans().filter(|p| p.kind == PlanKind::Changed).count()
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(|e| e.to_json_line() + "\n").collect()
    }
}

/// Runs a session as fast as possible until the source runs out or the
/// next tick would pass `duration_s`.
///
/// Rendering happens on a worker thread behind a queue of
/// [`RENDER_QUEUE`] jobs; segment events are placed right after the plan
/// that requested them, so the log does not depend on worker timing.
pub fn run_session(config: &SessionConfig, duration_s: f64, inputs: &[TimedInput], inline_audio: bool) -> Result<SessionRun> {
    let mut session = Session::new(config.clone())?;
    let mut inputs: Vec<&TimedInput> = inputs.iter().collect();
    inputs.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let mut pending_inputs = inputs.into_iter().peekable();

    let (job_tx, job_rx) = mpsc::sync_channel::<RenderJob>(RENDER_QUEUE);
    let (done_tx, done_rx) = mpsc::channel::<Result<RenderedSegment>>();
    let worker = thread::spawn(move || {
        for job in job_rx {
            if done_tx.send(render_segment(&job)).is_err() {
                break;
            }
        }
    });

    let mut events = vec![session.start_event()];
    let mut slots: Vec<(u64, usize)> = Vec::new();
    let reason = loop {
        let Some(t) = session.next_tick_s() else {
            break EndReason::SourceExhausted;
        };
        if t > duration_s + TIME_EPS {
            break EndReason::DurationReached;
        }
        while let Some(input) = pending_inputs.next_if(|i| i.at_s < t) {
            events.push(session.apply(input.frame.clone()));
        }
        let Some(step) = session.tick() else {
            break EndReason::SourceExhausted;
        };
        events.extend(step.events);
        if let Some(job) = step.render {
            slots.push((job.index, events.len()));
            job_tx.send(job).map_err(|e| ServiceError::Worker(e.to_string()))?;
        }
    };
    events.push(session.end_event(reason));
    drop(job_tx);

    let mut rendered: BTreeMap<u64, RenderedSegment> = BTreeMap::new();
    for _ in 0..slots.len() {
        let seg = done_rx.recv().map_err(|e| ServiceError::Worker(e.to_string()))??;
        rendered.insert(seg.segment.index, seg);
    }
    worker.join().map_err(|_| ServiceError::Worker("render worker panicked".into()))?;

    let mut audio = BTreeMap::new();
    for &(index, pos) in slots.iter().rev() {
        let seg = rendered.remove(&index).ok_or_else(|| ServiceError::Worker(format!("segment {index} missing")))?;
        events.insert(pos, SessionEvent::new(seg.segment.scheduled_s, Payload::Segment(seg.reference(inline_audio))));
        audio.insert(seg.segment.id.clone(), seg.wav);
    }
    Ok(SessionRun { events, audio })
}
