//! The network surface against real sockets: `/health`, `/session` and
//! `/segments/<id>.wav`.

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use biotone_service::engine::sha256_hex;
use biotone_service::server::{bind, serve, AppState, ServerDefaults};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start() -> SocketAddr {
    let (listener, addr) = bind("127.0.0.1:0").await.unwrap();
    tokio::spawn(serve(listener, AppState::new(ServerDefaults::default())));
    addr
}

async fn open(addr: SocketAddr, query: &str) -> Socket {
    connect_async(format!("ws://{addr}/session?{query}")).await.unwrap().0
}

/// Next server frame as JSON, or `None` when the socket closes.
async fn next(ws: &mut Socket) -> Option<Value> {
    loop {
        match tokio::time::timeout(Duration::from_secs(20), ws.next()).await.expect("server went quiet")? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        }
    }
}

async fn until(ws: &mut Socket, kind: &str) -> Value {
    loop {
        let f = next(ws).await.unwrap_or_else(|| panic!("closed before a {kind} frame"));
        if f["type"] == kind {
            return f;
        }
    }
}

async fn drain(ws: &mut Socket) -> Vec<Value> {
    let mut out = Vec::new();
    while let Some(f) = next(ws).await {
        out.push(f);
    }
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn health_answers_ok() {
    let addr = start().await;
    let body: Value = reqwest::get(format!("http://{addr}/health")).await.unwrap().json().await.unwrap();
    assert_eq!(body, json!({"status": "ok"}));
}

#[tokio::test(flavor = "multi_thread")]
async fn bind_failure_is_a_startup_error() {
    let (_held, addr) = bind("127.0.0.1:0").await.unwrap();
    assert!(bind(&addr.to_string()).await.is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn override_frame_changes_the_next_plan() {
    let addr = start().await;
    let mut ws = open(addr, "seed=3&speed=100").await;
    let first = until(&mut ws, "plan").await;
    assert_eq!(first["kind"], "initial");
    assert_eq!(first["v"], 1);

    ws.send(Message::text(r#"{"type":"vitals_override","hr_bpm":95,"rr_rpm":22}"#)).await.unwrap();
    let ack = until(&mut ws, "input").await;
    let sent_at = ack["timestamp_s"].as_f64().unwrap();
    let changed = loop {
        let p = until(&mut ws, "plan").await;
        if p["kind"] == "changed" {
            break p;
        }
    };
    assert!(changed["timestamp_s"].as_f64().unwrap() - sent_at <= 10.0);
    assert_eq!(changed["plan"]["mode"], "Zhi");
    assert!(changed["plan"]["tempo_bpm"].as_u64().unwrap() > first["plan"]["tempo_bpm"].as_u64().unwrap());
    assert!(changed["trace"]["observations"].as_array().unwrap().iter().any(|o| o.to_string().contains("elevated")));
}

#[tokio::test(flavor = "multi_thread")]
async fn segments_are_served_as_wav() {
    let addr = start().await;
    let mut ws = open(addr, "seed=4&speed=100").await;
    let seg = until(&mut ws, "segment").await;
    for field in ["id", "url", "bpm", "mode", "scheduled_s", "sha256"] {
        assert!(!seg[field].is_null(), "segment frame lacks {field}");
    }
    let url = format!("http://{addr}{}", seg["url"].as_str().unwrap());
    let resp = reqwest::get(url).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "audio/wav");
    let bytes = resp.bytes().await.unwrap();
    assert_eq!(&bytes[..4], b"RIFF");
    assert_eq!(sha256_hex(&bytes), seg["sha256"].as_str().unwrap());
    assert!(seg["timestamp_s"].as_f64().unwrap() >= seg["scheduled_s"].as_f64().unwrap());

    let missing = reqwest::get(format!("http://{addr}/segments/nope.wav")).await.unwrap();
    assert_eq!(missing.status(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_frames_only_affect_their_socket() {
    let addr = start().await;
    let mut bad = open(addr, "seed=1&speed=50&duration_s=30").await;
    let mut good = open(addr, "seed=2&speed=50&duration_s=30").await;
    for text in ["not json", r#"{"type":"teleport"}"#, r#"{"type":"vitals_override","hr_bpm":-1,"rr_rpm":12}"#, r#"{"v":2,"type":"pause"}"#] {
        bad.send(Message::text(text)).await.unwrap();
    }
    let bad_log = drain(&mut bad).await;
    let good_log = drain(&mut good).await;
    assert_eq!(bad_log.iter().filter(|f| f["type"] == "error").count(), 4);
    assert!(good_log.iter().all(|f| f["type"] != "error"));
    assert_eq!(bad_log.last().unwrap()["reason"], "duration_reached");
    assert!(bad_log.iter().any(|f| f["type"] == "plan"), "session keeps running after bad frames");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_are_isolated() {
    let addr = start().await;
    let mut a = open(addr, "seed=10&speed=50&duration_s=40").await;
    let mut b = open(addr, "seed=11&speed=50&duration_s=40&source=script&phase_s=20").await;
    let (log_a, log_b) = tokio::join!(drain(&mut a), drain(&mut b));
    let id_of = |log: &[Value]| log[0]["config"]["session_id"].as_str().unwrap().to_string();
    let (id_a, id_b) = (id_of(&log_a), id_of(&log_b));
    assert_ne!(id_a, id_b);
    assert_eq!(log_a[0]["config"]["seed"], 10);
    assert_eq!(log_b[0]["config"]["seed"], 11);
    for (log, id) in [(&log_a, &id_a), (&log_b, &id_b)] {
        let mut prev = f64::NEG_INFINITY;
        for f in log.iter() {
            let t = f["timestamp_s"].as_f64().unwrap();
            assert!(t >= prev);
            prev = t;
            if f["type"] == "segment" {
                assert!(f["id"].as_str().unwrap().starts_with(&format!("{id}-")));
            }
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_and_context_frames_are_acknowledged() {
    let addr = start().await;
    let mut ws = open(addr, "seed=5&speed=100&duration_s=60").await;
    until(&mut ws, "plan").await;
    ws.send(Message::text(r#"{"type":"context","time":"23:10","temp_c":24,"status":"resting"}"#)).await.unwrap();
    let ack = until(&mut ws, "input").await;
    assert_eq!(ack["frame"]["time"], "23:10");
    let s = until(&mut ws, "state").await;
    assert_eq!(s["time_bucket"], "late_night");

    ws.send(Message::text(r#"{"type":"pause"}"#)).await.unwrap();
    until(&mut ws, "input").await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    ws.send(Message::text(r#"{"type":"resume"}"#)).await.unwrap();
    let rest = drain(&mut ws).await;
    let resumed = rest.iter().position(|f| f["type"] == "input").unwrap();
    assert!(rest[..resumed].iter().all(|f| f["type"] != "vitals"), "no vitals while paused");
    assert_eq!(rest.last().unwrap()["type"], "session_end");
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_query_reports_and_closes() {
    let addr = start().await;
    let mut ws = open(addr, "source=radar").await;
    let log = drain(&mut ws).await;
    assert_eq!(log.len(), 1);
    assert_eq!(log[0]["type"], "error");
}
