//! The HTTP backend against a scripted local server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use tracewarden::http::{HttpFactory, HttpSettings};
use tracewarden::runner::InstantClock;
use tracewarden_core::backend::{playback, BackendError, GenerationParams, SessionFactory};
use tracewarden_core::methods::{run_instance, MethodSpec, RunContext};
use tracewarden_core::monitor::{MonitorConfig, RunStatus};
use tracewarden_core::taskgen::{Gold, QuestionKind, TaskInstance, TaskKind, TaskPayload, TemplateSet};

enum Reply {
    Status(u16),
    Sse(Vec<&'static str>),
    /// Announces a longer body than it sends, then hangs up.
    Cut(Vec<&'static str>),
    Json(Value),
}

struct Server {
    base: String,
    requests: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

fn chunk(token: &str) -> String {
    let c = json!({"choices": [{"delta": {"content": token}, "logprobs": {"content": [
        {"token": token, "logprob": -0.5, "top_logprobs": [{"token": token, "logprob": -0.5}, {"token": "zz", "logprob": -1.5}]}
    ]}, "finish_reason": null}]});
    format!("data: {c}\n\n")
}

fn serve(replies: Vec<Reply>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (req_log, auth_log) = (requests.clone(), auth.clone());
    let mut replies: VecDeque<Reply> = replies.into();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut bearer = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                let lower = l.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    bearer = Some(l["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            req_log.lock().unwrap().push(serde_json::from_slice(&body).unwrap());
            auth_log.lock().unwrap().push(bearer);
            let out = match replies.pop_front() {
                Some(Reply::Status(code)) => {
                    format!("HTTP/1.1 {code} X\r\nContent-Length: 5\r\nConnection: close\r\n\r\nnope\n")
                }
                Some(Reply::Sse(tokens)) => {
                    let mut s = String::from("HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nConnection: close\r\n\r\n");
                    for t in tokens {
                        s.push_str(&chunk(t));
                    }
                    s.push_str("data: {\"choices\":[{\"delta\":{},\"finish_reason\":\"stop\"}]}\n\ndata: [DONE]\n\n");
                    s
                }
                Some(Reply::Cut(tokens)) => {
                    let mut s = String::from(
                        "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nContent-Length: 100000\r\nConnection: close\r\n\r\n",
                    );
                    for t in tokens {
                        s.push_str(&chunk(t));
                    }
                    s
                }
                Some(Reply::Json(v)) => {
                    let b = v.to_string();
                    format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{b}", b.len())
                }
                None => "HTTP/1.1 500 X\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string(),
            };
            let _ = stream.write_all(out.as_bytes());
            let _ = stream.flush();
        }
    });
    Server { base, requests, auth }
}

fn factory(server: &Server, tweak: impl FnOnce(&mut HttpSettings)) -> HttpFactory {
    let mut s = HttpSettings {
        base_url: Some(server.base.clone()),
        model: Some("test-model".into()),
        backoff_ms: Some(1),
        ..Default::default()
    };
    tweak(&mut s);
    HttpFactory::new(s.resolve_with(|_| None).unwrap(), GenerationParams::qwen()).unwrap()
}

#[test]
fn unauthorized_fails_at_open_without_retrying() {
    let server = serve(vec![Reply::Status(401)]);
    let err = factory(&server, |_| {}).open("p", 0).err().unwrap();
    assert!(matches!(err, BackendError::Authentication(_)), "{err:?}");
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn streams_tokens_with_logprobs() {
    let server = serve(vec![Reply::Sse(vec!["Hel", "lo", " world"])]);
    let f = factory(&server, |s| s.api_key_env = None);
    let mut session = f.open_http("Say hi").unwrap();
    use tracewarden_core::backend::GenerationSession;
    let first = session.next_event().unwrap().unwrap();
    assert_eq!(first.text, "Hel");
    assert_eq!(first.top_logprobs.as_ref().unwrap().len(), 2);
    let (rest, n) = playback(&mut session).unwrap();
    assert_eq!((rest.as_str(), n), ("lo world", 2));
    let req = &server.requests.lock().unwrap()[0];
    assert_eq!(req["stream"], true);
    assert_eq!(req["model"], "test-model");
    assert_eq!(req["top_k"], 20);
    assert_eq!(req["top_logprobs"], 20);
    assert_eq!(req["messages"].as_array().unwrap().len(), 1);
    assert_eq!(server.auth.lock().unwrap()[0], None);
}

#[test]
fn api_key_is_sent_as_bearer() {
    let server = serve(vec![Reply::Sse(vec!["x"])]);
    let mut s = HttpSettings { base_url: Some(server.base.clone()), model: Some("m".into()), ..Default::default() };
    s.api_key_env = Some("KEYVAR".into());
    let cfg = s.resolve_with(|names| (names == ["KEYVAR"]).then(|| "sekrit".to_string())).unwrap();
    let f = HttpFactory::new(cfg, GenerationParams::qwen()).unwrap();
    playback(&mut *f.open("p", 0).unwrap()).unwrap();
    assert_eq!(server.auth.lock().unwrap()[0].as_deref(), Some("Bearer sekrit"));
}

#[test]
fn server_errors_are_retried_then_given_up() {
    let server = serve(vec![Reply::Status(503), Reply::Status(429), Reply::Sse(vec!["ok"])]);
    let f = factory(&server, |_| {});
    assert_eq!(playback(&mut *f.open("p", 0).unwrap()).unwrap().0, "ok");
    assert_eq!(server.requests.lock().unwrap().len(), 3);

    let server = serve(vec![Reply::Status(500), Reply::Status(500)]);
    let f = factory(&server, |s| s.max_retries = Some(1));
    let err = f.open("p", 0).err().unwrap();
    assert!(matches!(err, BackendError::Network { retryable: true, .. }), "{err:?}");

    let server = serve(vec![Reply::Status(400)]);
    assert!(matches!(factory(&server, |_| {}).open("p", 0).err().unwrap(), BackendError::Contract(_)));
}

#[test]
fn broken_stream_resumes_from_received_text() {
    let server = serve(vec![Reply::Cut(vec!["ab", "cd"]), Reply::Sse(vec!["ef"])]);
    let f = factory(&server, |_| {});
    let (text, n) = playback(&mut *f.open("p", 0).unwrap()).unwrap();
    assert_eq!((text.as_str(), n), ("abcdef", 3));
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1]["messages"][1], json!({"role": "assistant", "content": "abcd"}));
    assert_eq!(reqs[1]["continue_final_message"], true);
    assert_eq!(reqs[1]["add_generation_prompt"], false);
}

#[test]
fn probe_reads_first_token_distribution() {
    let reply = json!({"choices": [{"message": {"content": "A"}, "logprobs": {"content": [
        {"token": "A", "logprob": -0.1, "top_logprobs": [{"token": "B", "logprob": -2.5}, {"token": "A", "logprob": -0.1}]}
    ]}}]});
    let server = serve(vec![Reply::Sse(vec![]), Reply::Json(reply)]);
    let f = factory(&server, |_| {});
    let mut s = f.open("p", 0).unwrap();
    let dist = s.probe_next_distribution("thinking", "</think>").unwrap();
    assert_eq!(dist.len(), 2);
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs[1]["stream"], false);
    assert_eq!(reqs[1]["max_tokens"], 1);
    assert_eq!(reqs[1]["messages"][1]["content"], "thinking</think>");

    let server = serve(vec![Reply::Sse(vec![])]);
    let mut s = factory(&server, |s| s.logprobs = Some(false)).open("p", 0).unwrap();
    assert!(matches!(s.probe_next_distribution("x", "y"), Err(BackendError::Capability(_))));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn step_verifier_feedback_round_trips_through_prefill() {
    let server = serve(vec![
        Reply::Sse(vec!["Try 8 + 8 ", "+ 3 + 3 = 24\n", "so that is it\n"]),
        Reply::Sse(vec!["Then 8 / (3 - 8 / 3) = 24\n", "</think>\n", "8 / (3 - 8 / 3) = 24"]),
    ]);
    let f = factory(&server, |_| {});
    let inst = TaskInstance {
        id: "g".into(),
        kind: TaskKind::Game24,
        payload: TaskPayload::Game24 { numbers: [3, 3, 8, 8] },
        question_kind: QuestionKind::Make24,
        question: "Make 24.".into(),
        options: vec![],
        gold: Gold::Game24 { solvable: true, witness: None },
        seed: 0,
    };
    let templates = TemplateSet::builtin();
    let clock = InstantClock::start();
    let ctx = RunContext {
        factory: &f,
        templates: &templates,
        monitor: MonitorConfig::default(),
        clock: &clock,
        judge: None,
        prompt_style: None,
        sample: 0,
        keep_trace: true,
    };
    let rec = run_instance(&inst, &MethodSpec::StepVerify { max_interventions: 3 }, &ctx);
    assert_eq!(rec.status, RunStatus::Completed, "{:?}", rec.error);
    assert!(rec.correct);
    assert_eq!(rec.sound, Some(true));
    assert_eq!(rec.interventions.len(), 1);
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs.len(), 2);
    let prefill = reqs[1]["messages"][1]["content"].as_str().unwrap();
    assert!(prefill.starts_with("Try 8 + 8 + 3 + 3 = 24\n"));
    assert!(!prefill.contains("so that is it"));
    assert!(prefill.contains(rec.interventions[0].feedback.as_deref().unwrap().trim()));
}
