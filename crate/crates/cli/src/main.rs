//! `biotone`: every pipeline stage and the evaluation experiments.
//!
//! Stages compose over pipes: `simulate` writes a `t_s,value` CSV,
//! `vitals` turns it into JSON lines, `plan` turns those into plan lines,
//! `generate` reads the last plan line and writes melody JSON, and
//! `render`/`classify` consume melody JSON.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use biotone_cli::eval::{eval_tonal, eval_vitals, VitalsEvalConfig};
use biotone_core::audio::{encode_wav, render_with};
use biotone_core::melody::{generate_for_plan, generate_soft, generate_unconditioned, MelodyJson, DEFAULT_SOFT_BIAS};
use biotone_core::pentatonic::{classify_mode, PentatonicMode};
use biotone_core::planner::{self, validate_plan, Genre, Instrument, MusicPlan};
use biotone_core::radar::{corrupt, read_phase_csv, simulate_phase, wavelength_mm, write_csv, VitalsGroundTruth};
use biotone_core::state::{discretize, ClockTime, TimeBucket, UserState, VitalTokens};
use biotone_core::vitals::{track_vitals_with, Estimator, TrackerConfig, VitalsEstimate, VitalsLine, DEFAULT_MODEL_ORDER};
use biotone_service::config::{PlannerBackend, SessionConfig, SessionContext, Source};
use biotone_service::log::{replay, rerun, write_log};
use biotone_service::server::{bind, serve, AppState, ServerDefaults};
use biotone_service::run_session;

#[derive(Parser)]
#[command(name = "biotone", version, about = "Bio-adaptive pentatonic music pipeline")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when omitted unless noted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a radar phase trace as `t_s,value` CSV.
    Simulate(SimulateArgs),
    /// Track heart and respiration rates from a phase CSV; JSON lines out.
    Vitals(VitalsArgs),
    /// Plan music from rates given as flags or vitals JSON lines.
    Plan(PlanArgs),
    /// Generate a melody for a plan; melody JSON out.
    Generate(GenerateArgs),
    /// Render melody JSON to a 44.1 kHz PCM16 WAV.
    Render(RenderArgs),
    /// Classify the mode and tonic of melody JSON.
    Classify(ClassifyArgs),
    /// Run a headless session; JSONL event log out.
    Session(SessionArgs),
    /// Serve `/session`, `/health` and `/segments/<id>.wav`.
    Serve(ServeArgs),
    /// Tonal accuracy under the three conditioning regimes.
    EvalTonal(EvalTonalArgs),
    /// Rate error over the standard frequency grid.
    EvalVitals(EvalVitalsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Respiration frequency, Hz.
    #[arg(long, default_value_t = 0.25)]
    fr: f64,
    /// Heart frequency, Hz.
    #[arg(long, default_value_t = 1.2)]
    fh: f64,
    /// Respiration amplitude, mm.
    #[arg(long, default_value_t = 4.0)]
    ar: f64,
    /// Heart amplitude, mm.
    #[arg(long, default_value_t = 0.2)]
    ah: f64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Sample rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    fs: f64,
    #[arg(long, default_value_t = 60.0)]
    carrier_ghz: f64,
    /// Noise level in dB; no noise when omitted.
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Linear phase drift, rad/s.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    drift: f64,
    /// Add the second respiration harmonic.
    #[arg(long)]
    harmonic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Fft,
    Music,
}

impl EstimatorArg {
    fn build(self, order: usize) -> Estimator {
        match self {
            EstimatorArg::Fft => Estimator::Periodogram,
            EstimatorArg::Music => Estimator::Subspace { model_order: order },
        }
    }
}

#[derive(Args)]
struct VitalsArgs {
    /// Phase CSV; standard input when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    #[arg(long, default_value_t = 5.0)]
    hop: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Fft)]
    estimator: EstimatorArg,
    /// Subspace model order.
    #[arg(long, default_value_t = DEFAULT_MODEL_ORDER)]
    order: usize,
    #[arg(long, default_value_t = 60.0)]
    carrier_ghz: f64,
}

#[derive(Args)]
struct ContextArgs {
    /// Clock time, HH:MM.
    #[arg(long, default_value = "14:00")]
    time: String,
    /// Ambient temperature, °C.
    #[arg(long, default_value_t = 22.0, allow_negative_numbers = true)]
    temp: f64,
    #[arg(long, default_value = "resting")]
    status: String,
}

#[derive(Args)]
struct PlanArgs {
    /// Heart rate, bpm. With --rr, plans once instead of reading vitals lines.
    #[arg(long, requires = "rr")]
    hr: Option<f64>,
    /// Respiration rate, breaths/min.
    #[arg(long, requires = "hr")]
    rr: Option<f64>,
    /// Vitals JSON lines; standard input when omitted.
    #[arg(long = "in", conflicts_with = "hr")]
    input: Option<PathBuf>,
    #[command(flatten)]
    context: ContextArgs,
    /// Previous instrumentation, comma separated.
    #[arg(long, value_delimiter = ',')]
    prev_instruments: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Embedded,
    Soft,
    Unconditioned,
}

#[derive(Args)]
struct GenerateArgs {
    /// Plan JSON or plan lines (the last line is used); standard input when
    /// neither this nor --mode is given.
    #[arg(long = "in", conflicts_with = "mode")]
    input: Option<PathBuf>,
    /// Build the plan from flags instead.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    tonic: u8,
    #[arg(long, default_value_t = 90)]
    tempo: u32,
    #[arg(long, default_value_t = 0.5)]
    intensity: f64,
    #[arg(long, default_value = "guzheng")]
    instrument: String,
    #[arg(long, default_value_t = 4)]
    bars: usize,
    #[arg(long, value_enum, default_value_t = ConditionArg::Embedded)]
    condition: ConditionArg,
    /// Soft-label bias weight.
    #[arg(long, default_value_t = DEFAULT_SOFT_BIAS)]
    bias: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// Melody JSON; standard input when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "guzheng")]
    instrument: String,
    /// Overrides the melody's tempo.
    #[arg(long)]
    tempo: Option<u32>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Melody JSON; standard input when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Script,
    Live,
    Trace,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, value_enum, default_value_t = SourceArg::Script)]
    source: SourceArg,
    /// Seconds per rest/active/rest phase of the script source.
    #[arg(long, default_value_t = 60.0)]
    phase: f64,
    /// Live source heart rate.
    #[arg(long, default_value_t = 60.0)]
    hr: f64,
    /// Live source respiration rate.
    #[arg(long, default_value_t = 15.0)]
    rr: f64,
    /// Phase CSV for the trace source.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 60.0)]
    carrier_ghz: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Fft)]
    estimator: EstimatorArg,
    /// Session length in seconds; script and trace sources stop on their own.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    replan: f64,
    #[arg(long, default_value_t = 2.0)]
    crossfade: f64,
    #[command(flatten)]
    context: ContextArgs,
    /// External planner endpoint; rules when omitted.
    #[arg(long)]
    planner_url: Option<String>,
    #[arg(long, default_value_t = 500)]
    timeout_ms: u64,
    /// Embed segment audio as base64 in the log.
    #[arg(long)]
    inline: bool,
    /// Write each segment as `<id>.wav` here.
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Re-run a logged session and check it reproduces byte for byte.
    #[arg(long, conflicts_with_all = ["source", "trace", "duration"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: String,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, default_value_t = 10.0)]
    replan: f64,
    #[arg(long)]
    planner_url: Option<String>,
    #[arg(long, default_value_t = 500)]
    timeout_ms: u64,
}

#[derive(Args)]
struct EvalTonalArgs {
    /// Melodies per condition.
    #[arg(long, default_value_t = 1000)]
    n: usize,
}

#[derive(Args)]
struct EvalVitalsArgs {
    /// Noise levels in dB; `inf` is the clean run.
    #[arg(long, value_delimiter = ',', default_value = "inf,0", allow_negative_numbers = true)]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    #[arg(long, default_value_t = 5.0)]
    hop: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Fft)]
    estimator: EstimatorArg,
    /// Leave out the second respiration harmonic.
    #[arg(long)]
    no_harmonic: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (seed, out) = (cli.seed, cli.out);
    match cli.command {
        Command::Simulate(a) => simulate(a, seed, out.as_deref()),
        Command::Vitals(a) => vitals(a, out.as_deref()),
        Command::Plan(a) => plan(a, seed, out.as_deref()),
        Command::Generate(a) => generate(a, seed, out.as_deref()),
        Command::Render(a) => render(a, out.as_deref()),
        Command::Classify(a) => classify(a, out.as_deref()),
        Command::Session(a) => session(a, seed, out.as_deref()),
        Command::Serve(a) => serve_cmd(a),
        Command::EvalTonal(a) => eval_tonal_cmd(a, seed, out.as_deref()),
        Command::EvalVitals(a) => eval_vitals_cmd(a, seed, out.as_deref()),
    }
}

// ── I/O helpers ────────────────────────────────────────────────────────────

fn open_in(path: Option<&Path>) -> Result<Box<dyn Read>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(File::open(p).with_context(|| format!("opening {}", p.display()))?),
        _ => Box::new(io::stdin()),
    })
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        _ => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn read_all(path: Option<&Path>) -> Result<String> {
    let mut s = String::new();
    open_in(path)?.read_to_string(&mut s)?;
    Ok(s)
}

fn write_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn parse_instrument(s: &str) -> Result<Instrument> {
    Ok(s.parse::<Instrument>()?)
}

// ── Stages ─────────────────────────────────────────────────────────────────

fn simulate(a: SimulateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let truth = VitalsGroundTruth::new(a.fr, a.fh, a.ar, a.ah)?.with_resp_harmonic(a.harmonic);
    let lambda = wavelength_mm(a.carrier_ghz * 1e9);
    let clean = simulate_phase(&truth, a.duration, a.fs, lambda)?;
    let signal = corrupt(&clean, a.snr.unwrap_or(f64::INFINITY), a.drift, seed)?;
    let mut w = open_out(out)?;
    write_csv(&signal.samples, signal.sample_rate_hz, &mut w)?;
    w.flush()?;
    Ok(())
}

fn vitals(a: VitalsArgs, out: Option<&Path>) -> Result<()> {
    let signal = read_phase_csv(open_in(a.input.as_deref())?, wavelength_mm(a.carrier_ghz * 1e9))?;
    let config = TrackerConfig::new(a.window, a.hop).with_estimator(a.estimator.build(a.order));
    let mut w = open_out(out)?;
    for v in track_vitals_with(&signal, &config)? {
        write_line(&mut w, &v.to_line())?;
    }
    w.flush()?;
    Ok(())
}

fn plan(a: PlanArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let clock: ClockTime = a.context.time.parse()?;
    let prev_instruments = a.prev_instruments.iter().map(|s| parse_instrument(s)).collect::<Result<Vec<_>>>()?;
    let estimates: Vec<VitalsEstimate> = match (a.hr, a.rr) {
        (Some(hr), Some(rr)) => vec![VitalsEstimate::from_rates(hr, rr, 0.0, 0.0)],
        _ => {
            let reader = BufReader::new(open_in(a.input.as_deref())?);
            let mut v = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: VitalsLine = serde_json::from_str(&line).with_context(|| format!("vitals line {}", i + 1))?;
                v.push(parsed.into());
            }
            v
        }
    };
    let mut w = open_out(out)?;
    let mut tokens: Option<VitalTokens> = None;
    let mut prev: Option<MusicPlan> = None;
    let start = estimates.first().map_or(0.0, |e| e.window_end_s);
    for est in estimates {
        let t = discretize(&est, tokens);
        tokens = Some(t);
        let now = clock.advanced_by(est.window_end_s - start);
        let state = UserState {
            tokens: t,
            clock_time: now,
            time_bucket: TimeBucket::of(now),
            temperature_c: a.context.temp,
            user_status: a.context.status.clone(),
            prev_instrumentation: prev.as_ref().map(|p| p.instrumentation.clone()).unwrap_or_else(|| prev_instruments.clone()),
        };
        let (p, trace) = planner::plan(&state, prev.as_ref(), seed);
        write_line(&mut w, &json!({ "state": state, "plan": p, "trace": trace, "prompt": planner::render_prompt(&p) }))?;
        prev = Some(p);
    }
    w.flush()?;
    Ok(())
}

/// Accepts a bare plan object or a `plan` line; takes the last non-empty
/// line of the input.
fn read_plan(text: &str) -> Result<MusicPlan> {
    let line = text.lines().rev().find(|l| !l.trim().is_empty()).ok_or_else(|| anyhow!("no plan in input"))?;
    let value: Value = serde_json::from_str(line).context("plan input is not JSON")?;
    let raw = value.get("plan").cloned().unwrap_or(value);
    Ok(validate_plan(&raw)?.plan)
}

fn generate(a: GenerateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let plan = match &a.mode {
        Some(mode) => MusicPlan {
            tempo_bpm: a.tempo,
            genre_mood: Genre::Folk,
            instrumentation: vec![parse_instrument(&a.instrument)?],
            mode: mode.parse::<PentatonicMode>()?,
            tonic_pc: a.tonic,
            intensity: a.intensity,
        },
        None => read_plan(&read_all(a.input.as_deref())?)?,
    };
    plan.validate()?;
    let score = match a.condition {
        ConditionArg::Embedded => generate_for_plan(&plan, a.bars, seed)?,
        ConditionArg::Soft => generate_soft(&plan, a.bias, a.bars, seed)?,
        ConditionArg::Unconditioned => generate_unconditioned(&plan, a.bars, seed)?,
    };
    let mut w = open_out(out)?;
    write_line(&mut w, &score.to_json())?;
    w.flush()?;
    Ok(())
}

fn read_melody(path: Option<&Path>) -> Result<MelodyJson> {
    serde_json::from_str(read_all(path)?.trim()).context("melody input is not melody JSON")
}

fn render(a: RenderArgs, out: Option<&Path>) -> Result<()> {
    let melody = read_melody(a.input.as_deref())?;
    let tempo = a.tempo.unwrap_or(melody.bpm);
    let clip = render_with(&melody.into_score()?, tempo, parse_instrument(&a.instrument)?)?;
    let mut w = open_out(out)?;
    w.write_all(&encode_wav(&clip))?;
    w.flush()?;
    Ok(())
}

fn classify(a: ClassifyArgs, out: Option<&Path>) -> Result<()> {
    let melody = read_melody(a.input.as_deref())?;
    let c = classify_mode(&melody.notes)?;
    let mut w = open_out(out)?;
    write_line(&mut w, &c)?;
    w.flush()?;
    Ok(())
}

fn session(a: SessionArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    if let Some(log) = &a.replay {
        let logged = replay(log)?;
        let again = rerun(&logged)?;
        let original = std::fs::read_to_string(log)?;
        if again.to_jsonl() != original {
            bail!("re-run of {} diverges from the log", log.display());
        }
        eprintln!("replay ok: {} events, {} segments identical", again.events.len(), again.audio.len());
        return write_audio(a.audio_dir.as_deref(), &again.audio);
    }
    let source = match a.source {
        SourceArg::Script => Source::rest_active_rest(a.phase),
        SourceArg::Live => Source::Live { hr_bpm: a.hr, rr_rpm: a.rr },
        SourceArg::Trace => Source::Trace {
            path: a.trace.clone().ok_or_else(|| anyhow!("--source trace needs --trace <csv>"))?,
            wavelength_mm: wavelength_mm(a.carrier_ghz * 1e9),
            estimator: a.estimator.build(DEFAULT_MODEL_ORDER),
        },
    };
    let duration = match (a.source, a.duration) {
        (_, Some(d)) => d,
        (SourceArg::Live, None) => bail!("--source live needs --duration"),
        _ => f64::INFINITY,
    };
    let mut config = SessionConfig::new(seed, source);
    config.replan_interval_s = a.replan;
    config.crossfade_s = a.crossfade;
    config.context = SessionContext {
        time: a.context.time.parse()?,
        temp_c: a.context.temp,
        status: a.context.status.clone(),
    };
    if let Some(endpoint) = a.planner_url {
        config.planner = PlannerBackend::External {
            endpoint,
            timeout_ms: a.timeout_ms,
        };
    }
    let run = run_session(&config, duration, &[], a.inline)?;
    match out {
        Some(p) if p != Path::new("-") => write_log(p, &run.events)?,
        _ => {
            let mut w = open_out(None)?;
            w.write_all(run.to_jsonl().as_bytes())?;
            w.flush()?;
        }
    }
    write_audio(a.audio_dir.as_deref(), &run.audio)
}

fn write_audio(dir: Option<&Path>, audio: &std::collections::BTreeMap<String, Vec<u8>>) -> Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    for (id, wav) in audio {
        std::fs::write(dir.join(format!("{id}.wav")), wav)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut defaults = ServerDefaults {
        speed: a.speed,
        replan_interval_s: a.replan,
        ..ServerDefaults::default()
    };
    if let Some(endpoint) = a.planner_url {
        defaults.planner = PlannerBackend::External {
            endpoint,
            timeout_ms: a.timeout_ms,
        };
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let (listener, addr) = bind(&a.addr).await.with_context(|| format!("binding {}", a.addr))?;
        eprintln!("listening on http://{addr}");
        serve(listener, AppState::new(defaults)).await?;
        Ok(())
    })
}

// ── Evaluation ─────────────────────────────────────────────────────────────

fn eval_tonal_cmd(a: EvalTonalArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let reports = eval_tonal(a.n, seed)?;
    println!("{:<14} {:>6} {:>8} {:>9}", "condition", "n", "correct", "accuracy");
    for r in &reports {
        println!("{:<14} {:>6} {:>8} {:>8.1}%", r.condition.label(), r.n, r.correct, 100.0 * r.accuracy);
    }
    let path = out.unwrap_or(Path::new("eval_tonal.json"));
    std::fs::write(path, serde_json::to_string_pretty(&reports)? + "\n")?;
    Ok(())
}

fn eval_vitals_cmd(a: EvalVitalsArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let config = VitalsEvalConfig {
        snrs_db: a.snr,
        duration_s: a.duration,
        window_s: a.window,
        hop_s: a.hop,
        estimator: a.estimator.build(DEFAULT_MODEL_ORDER),
        resp_harmonic: !a.no_harmonic,
        ..VitalsEvalConfig::default()
    };
    let report = eval_vitals(&config, seed)?;
    println!("{:>8} {:>7} {:>7} {:>10} {:>10} {:>10} {:>10}", "snr_db", "fr_hz", "fh_hz", "rr_max", "rr_mean", "hr_max", "hr_mean");
    for c in &report.cases {
        println!(
            "{:>8} {:>7.2} {:>7.2} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            c.snr_db, c.resp_freq_hz, c.heart_freq_hz, c.rr_max_err_rpm, c.rr_mean_err_rpm, c.hr_max_err_bpm, c.hr_mean_err_bpm
        );
    }
    for s in &report.summary {
        println!(
            "summary snr {}: rr max {:.3} rpm mean {:.3} | hr max {:.3} bpm mean {:.3}",
            s.snr_db, s.rr_max_err_rpm, s.rr_mean_err_rpm, s.hr_max_err_bpm, s.hr_mean_err_bpm
        );
    }
    let path = out.unwrap_or(Path::new("eval_vitals.json"));
    std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}
