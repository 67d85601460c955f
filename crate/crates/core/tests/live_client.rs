//! The HTTP client against a local fake chat-completions server.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use digknow::distiller::DistillOptions;
use digknow::eval::{build_knowledge_base, TaskSuite};
use digknow::knowledge_base::BagOfClasses;
use digknow::llm_gateway::{
    ChatClient, ChatRequest, DecodingParams, Gateway, GatewayError, LiveClient, LiveConfig, LogRecord, RecordingClient,
    ReplayClient, ScriptedClient, TemplateId,
};
use digknow::planner::{run_task, RunOptions};
use digknow::simulator::{FaultConfig, FaultMode};

struct Reply {
    status: u16,
    body: String,
}

type Handler = dyn Fn(&Value, &str) -> Reply + Send + Sync;

fn read_request(stream: &mut TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = String::new();
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().ok()?;
        }
        headers.push_str(&line);
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((headers, serde_json::from_slice(&body).ok()?))
}

/// Serve every connection on its own thread until the test exits.
fn serve(handler: Arc<Handler>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            thread::spawn(move || {
                while let Some((headers, body)) = read_request(&mut stream) {
                    let reply = handler(&body, &headers);
                    let text = format!(
                        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
                        reply.status,
                        reply.body.len(),
                        reply.body
                    );
                    if stream.write_all(text.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    format!("http://{addr}/v1")
}

fn content(text: &str) -> Reply {
    Reply { status: 200, body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string() }
}

fn config(base: &str) -> LiveConfig {
    LiveConfig { backoff_ms: 1, max_retries: 2, ..LiveConfig::new(base, "test-model") }
}

fn request(prompt: &str) -> ChatRequest {
    ChatRequest {
        template: TemplateId::ALL[0],
        placeholders: Default::default(),
        prompt: prompt.into(),
        params: DecodingParams::default(),
    }
}

#[test]
fn sends_openai_shaped_requests_and_retries_server_errors() {
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let (h, s) = (hits.clone(), seen.clone());
    let base = serve(Arc::new(move |body: &Value, headers: &str| {
        s.lock().unwrap().push((body.clone(), headers.to_string()));
        if h.fetch_add(1, Ordering::SeqCst) == 0 {
            Reply { status: 503, body: "busy".into() }
        } else {
            content("1. Open the drawer.")
        }
    }));
    let client = LiveClient::new(config(&base), "sk-test".into());
    assert_eq!(client.complete(&request("hello")).unwrap(), "1. Open the drawer.");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    let seen = seen.lock().unwrap();
    let (body, headers) = &seen[1];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["temperature"], 0.0);
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    assert!(headers.starts_with("POST /v1/chat/completions "));
}

#[test]
fn client_errors_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let base = serve(Arc::new(move |_: &Value, _: &str| {
        h.fetch_add(1, Ordering::SeqCst);
        Reply { status: 400, body: "bad request".into() }
    }));
    let err = LiveClient::new(config(&base), "k".into()).complete(&request("x")).unwrap_err();
    assert!(matches!(err, GatewayError::Http { status: 400, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_give_up_after_the_limit() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let base = serve(Arc::new(move |_: &Value, _: &str| {
        h.fetch_add(1, Ordering::SeqCst);
        Reply { status: 429, body: "slow down".into() }
    }));
    let err = LiveClient::new(config(&base), "k".into()).complete(&request("x")).unwrap_err();
    assert!(matches!(err, GatewayError::Http { status: 429, .. }));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn missing_content_is_an_error() {
    let base = serve(Arc::new(|_: &Value, _: &str| Reply { status: 200, body: "{\"choices\": []}".into() }));
    assert!(LiveClient::new(config(&base), "k".into()).complete(&request("x")).is_err());
}

/// Distill the bundled demonstrations and run one faulty episode.
fn session(gw: &Gateway) -> String {
    let dir = tempfile::tempdir().unwrap();
    let suite = TaskSuite::bundled();
    let embedder = BagOfClasses::default();
    let kb = build_knowledge_base(&suite, dir.path(), gw, &embedder, &DistillOptions::default()).unwrap();
    let task = suite.task(4).unwrap();
    let faults = FaultConfig::new(0.3, FaultMode::DropAfterPick, 9).unwrap();
    let mut world = task.world(2).unwrap();
    let r = run_task(&task.description, &mut world, &task.goal, gw, &RunOptions::new(Some(&kb), &embedder, &faults));
    assert!(r.success, "{:?}", r.cause);
    serde_json::to_string(&r).unwrap()
}

#[test]
fn live_session_records_and_replays_offline() {
    let dir = tempfile::tempdir().unwrap();
    // The server answers from a log of the scripted model, keyed by prompt.
    let reference = dir.path().join("reference.jsonl");
    let expected = session(&Gateway::new(Arc::new(RecordingClient::new(ScriptedClient::golden(), &reference).unwrap())));
    let mut answers: HashMap<String, VecDeque<String>> = HashMap::new();
    for line in std::fs::read_to_string(&reference).unwrap().lines() {
        let r: LogRecord = serde_json::from_str(line).unwrap();
        answers.entry(r.prompt).or_default().push_back(r.response);
    }
    let answers = Mutex::new(answers);
    let base = serve(Arc::new(move |body: &Value, _: &str| {
        let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
        match answers.lock().unwrap().get_mut(&prompt).and_then(VecDeque::pop_front) {
            Some(text) => content(&text),
            None => Reply { status: 404, body: "unknown prompt".into() },
        }
    }));

    let log = dir.path().join("live.jsonl");
    let live = RecordingClient::new(LiveClient::new(config(&base), "k".into()), &log).unwrap();
    assert_eq!(session(&Gateway::new(Arc::new(live))), expected);

    let replay = Arc::new(ReplayClient::load(&log).unwrap());
    assert_eq!(session(&Gateway::new(replay.clone())), expected);
    assert_eq!(replay.remaining(), 0);
}
