//! OpenAI-compatible chat-completions backend with server-sent-event streaming.
//!
//! Continuations work by assistant prefill: the amended trace body is sent as a
//! trailing assistant message with `continue_final_message` set, so the server
//! keeps writing from the end of that message.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tracewarden_core::backend::{
    BackendError, GenerationParams, GenerationSession, SessionDescriptor, SessionFactory, TokenEvent, TopLogprob,
};
use tracewarden_core::trace::ReasoningTrace;

pub const MAX_TOP_LOGPROBS: u32 = 20;

/// Environment variables, in lookup order, for each setting.
const ENV_BASE_URL: [&str; 2] = ["TRACEWARDEN_BASE_URL", "INTERWHEN_BASE_URL"];
const ENV_API_KEY: [&str; 2] = ["TRACEWARDEN_API_KEY", "INTERWHEN_API_KEY"];
const ENV_MODEL: [&str; 2] = ["TRACEWARDEN_MODEL", "INTERWHEN_MODEL"];

/// Backend settings as written in a run config. Missing fields fall back to
/// the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub base_url: Option<String>,
    /// Name of an environment variable holding the key, if not the default one.
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub logprobs: Option<bool>,
    pub top_logprobs: Option<u32>,
    pub request_timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub logprobs: bool,
    pub top_logprobs: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

fn first_env(names: &[&str]) -> Option<String> {
    names.iter().find_map(|n| std::env::var(n).ok().filter(|v| !v.is_empty()))
}

impl HttpSettings {
    pub fn resolve(&self) -> Result<HttpConfig, BackendError> {
        self.resolve_with(first_env)
    }

    /// `lookup` receives candidate variable names and returns the first set one.
    pub fn resolve_with(&self, lookup: impl Fn(&[&str]) -> Option<String>) -> Result<HttpConfig, BackendError> {
        let cfg = |m: &str| BackendError::Configuration(m.into());
        let base_url = self
            .base_url
            .clone()
            .or_else(|| lookup(&ENV_BASE_URL))
            .ok_or_else(|| cfg("no base URL: set base_url or TRACEWARDEN_BASE_URL / INTERWHEN_BASE_URL"))?;
        let model = self
            .model
            .clone()
            .or_else(|| lookup(&ENV_MODEL))
            .ok_or_else(|| cfg("no model: set model or TRACEWARDEN_MODEL / INTERWHEN_MODEL"))?;
        let api_key = match &self.api_key_env {
            Some(var) => Some(lookup(&[var.as_str()]).ok_or_else(|| cfg(&format!("{var} is not set")))?),
            None => lookup(&ENV_API_KEY),
        };
        let top_logprobs = self.top_logprobs.unwrap_or(MAX_TOP_LOGPROBS);
        if top_logprobs == 0 || top_logprobs > MAX_TOP_LOGPROBS {
            return Err(cfg("top_logprobs must lie in 1..=20"));
        }
        if !base_url.starts_with("http://") && !base_url.starts_with("https://") {
            return Err(cfg("base URL must start with http:// or https://"));
        }
        Ok(HttpConfig {
            base_url,
            api_key,
            model,
            logprobs: self.logprobs.unwrap_or(true),
            top_logprobs,
            request_timeout: Duration::from_secs(self.request_timeout_secs.unwrap_or(3600)),
            max_retries: self.max_retries.unwrap_or(3),
            backoff: Duration::from_millis(self.backoff_ms.unwrap_or(500)),
        })
    }
}

impl HttpConfig {
    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

struct Shared {
    cfg: HttpConfig,
    params: GenerationParams,
    client: Client,
    descriptor: SessionDescriptor,
}

impl Shared {
    fn body(&self, prompt: &str, prefill: &str, stream: bool, max_tokens: u32, top_logprobs: u32) -> Value {
        let mut messages = vec![json!({"role": "user", "content": prompt})];
        let mut body = json!({
            "model": self.cfg.model,
            "stream": stream,
            "temperature": self.params.temperature,
            "top_p": self.params.top_p,
            "max_tokens": max_tokens,
        });
        if !prefill.is_empty() {
            messages.push(json!({"role": "assistant", "content": prefill}));
            body["continue_final_message"] = json!(true);
            body["add_generation_prompt"] = json!(false);
        }
        body["messages"] = Value::Array(messages);
        if let Some(k) = self.params.top_k {
            body["top_k"] = json!(k);
        }
        if self.cfg.logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(top_logprobs);
        }
        body
    }

    /// Sends with retries on network errors, 429 and 5xx.
    fn send(&self, body: &Value) -> Result<Response, BackendError> {
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(self.cfg.endpoint()).timeout(self.cfg.request_timeout)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.to_string());
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            let err = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return Ok(resp);
                    }
                    let text = resp.text().unwrap_or_default();
                    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                        return Err(BackendError::Authentication(format!("{status}: {}", snippet(&text))));
                    }
                    if status != StatusCode::TOO_MANY_REQUESTS && !status.is_server_error() {
                        return Err(BackendError::Contract(format!("{status}: {}", snippet(&text))));
                    }
                    format!("{status}: {}", snippet(&text))
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.cfg.max_retries {
                return Err(BackendError::Network { message: err, retryable: true });
            }
            let wait = self.cfg.backoff * 2u32.saturating_pow(attempt);
            warn!("request failed ({err}); retrying in {wait:?}");
            thread::sleep(wait);
            attempt += 1;
        }
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

/// Opens one streaming request per session.
#[derive(Clone)]
pub struct HttpFactory {
    shared: Arc<Shared>,
}

impl HttpFactory {
    pub fn new(cfg: HttpConfig, params: GenerationParams) -> Result<Self, BackendError> {
        params.validate()?;
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| BackendError::Configuration(e.to_string()))?;
        let descriptor = SessionDescriptor { backend: "http".into(), model: cfg.model.clone(), params };
        Ok(Self { shared: Arc::new(Shared { cfg, params, client, descriptor }) })
    }

    pub fn open_http(&self, prompt: &str) -> Result<HttpSession, BackendError> {
        let mut s = HttpSession {
            shared: self.shared.clone(),
            prompt: prompt.into(),
            prefill: String::new(),
            received: String::new(),
            tokens: 0,
            reader: None,
            pending: VecDeque::new(),
            done: false,
        };
        s.start()?;
        Ok(s)
    }
}

impl SessionFactory for HttpFactory {
    fn open(&self, prompt: &str, _sample: u32) -> Result<Box<dyn GenerationSession>, BackendError> {
        Ok(Box::new(self.open_http(prompt)?))
    }
}

pub struct HttpSession {
    shared: Arc<Shared>,
    prompt: String,
    /// Assistant text the current stream continues from.
    prefill: String,
    /// Text streamed since the last (re)start.
    received: String,
    tokens: u32,
    reader: Option<BufReader<Response>>,
    pending: VecDeque<TokenEvent>,
    done: bool,
}

impl HttpSession {
    fn start(&mut self) -> Result<(), BackendError> {
        let remaining = self.shared.params.max_tokens.saturating_sub(self.tokens).max(1);
        let context = format!("{}{}", self.prefill, self.received);
        let body = self.shared.body(&self.prompt, &context, true, remaining, self.shared.cfg.top_logprobs);
        let resp = self.shared.send(&body)?;
        self.prefill = context;
        self.received.clear();
        self.reader = Some(BufReader::new(resp));
        self.done = false;
        Ok(())
    }

    /// Reads SSE lines until one yields events or the stream ends.
    fn pump(&mut self) -> Result<(), BackendError> {
        let mut resumes = 0;
        while self.pending.is_empty() && !self.done {
            let Some(reader) = self.reader.as_mut() else {
                self.done = true;
                break;
            };
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => self.done = true,
                Ok(_) => match parse_sse_line(&line)? {
                    SseLine::Skip => {}
                    SseLine::Done => self.done = true,
                    SseLine::Events { events, finished } => {
                        for ev in &events {
                            self.received.push_str(&ev.text);
                            self.tokens += u32::from(!ev.continuation);
                        }
                        self.pending.extend(events);
                        self.done |= finished;
                    }
                },
                Err(e) => {
                    if resumes >= self.shared.cfg.max_retries {
                        return Err(BackendError::Network { message: e.to_string(), retryable: true });
                    }
                    resumes += 1;
                    warn!("stream broke ({e}); resuming from {} bytes", self.prefill.len() + self.received.len());
                    self.start()?;
                }
            }
        }
        if self.done {
            self.reader = None;
        }
        Ok(())
    }
}

impl GenerationSession for HttpSession {
    fn descriptor(&self) -> &SessionDescriptor {
        &self.shared.descriptor
    }

    fn next_event(&mut self) -> Result<Option<TokenEvent>, BackendError> {
        if self.pending.is_empty() {
            self.pump()?;
        }
        Ok(self.pending.pop_front())
    }

    fn continue_from(&mut self, trace: &ReasoningTrace) -> Result<(), BackendError> {
        self.reader = None;
        self.pending.clear();
        self.prefill = trace.body().to_string();
        self.received.clear();
        debug!("continuing from {} bytes", self.prefill.len());
        self.start()
    }

    fn cancel(&mut self) {
        self.reader = None;
        self.pending.clear();
        self.done = true;
    }

    fn close(&mut self) {
        self.cancel();
    }

    fn probe_next_distribution(&mut self, context: &str, suffix: &str) -> Result<Vec<TopLogprob>, BackendError> {
        if !self.shared.cfg.logprobs {
            return Err(BackendError::Capability("logprobs are disabled for this backend".into()));
        }
        let prefill = format!("{context}{suffix}");
        let body = self.shared.body(&self.prompt, &prefill, false, 1, self.shared.cfg.top_logprobs);
        let resp = self.shared.send(&body)?;
        let v: Value = serde_json::from_reader(resp).map_err(|e| BackendError::Contract(format!("probe reply is not JSON: {e}")))?;
        let first = v
            .pointer("/choices/0/logprobs/content/0")
            .ok_or_else(|| BackendError::Capability("probe reply carries no logprobs".into()))?;
        Ok(entry_logprobs(first).unwrap_or_default())
    }
}

#[derive(Debug, PartialEq)]
pub enum SseLine {
    Skip,
    Done,
    Events { events: Vec<TokenEvent>, finished: bool },
}

#[derive(Deserialize)]
struct Chunk {
    #[serde(default)]
    choices: Vec<ChunkChoice>,
    #[serde(default)]
    error: Option<Value>,
}

#[derive(Deserialize)]
struct ChunkChoice {
    #[serde(default)]
    delta: Option<Delta>,
    #[serde(default)]
    logprobs: Option<ChunkLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Delta {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChunkLogprobs {
    #[serde(default)]
    content: Option<Vec<Value>>,
}

fn entry_logprobs(entry: &Value) -> Option<Vec<TopLogprob>> {
    let top = entry.get("top_logprobs")?.as_array()?;
    Some(
        top.iter()
            .filter_map(|t| Some(TopLogprob::new(t.get("token")?.as_str()?, t.get("logprob")?.as_f64()?)))
            .collect(),
    )
}

/// Parses one line of an SSE body. A chunk whose logprob entries spell out its
/// text becomes one event per entry; otherwise it is one event.
pub fn parse_sse_line(line: &str) -> Result<SseLine, BackendError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let Some(data) = line.strip_prefix("data:") else { return Ok(SseLine::Skip) };
    let data = data.trim_start();
    if data == "[DONE]" {
        return Ok(SseLine::Done);
    }
    let chunk: Chunk =
        serde_json::from_str(data).map_err(|e| BackendError::Contract(format!("bad stream chunk: {e}: {data}")))?;
    if let Some(err) = chunk.error {
        return Err(BackendError::Network { message: err.to_string(), retryable: false });
    }
    let Some(choice) = chunk.choices.into_iter().next() else { return Ok(SseLine::Skip) };
    let finished = choice.finish_reason.is_some();
    let text = choice.delta.and_then(|d| d.content).unwrap_or_default();
    let entries = choice.logprobs.and_then(|l| l.content).unwrap_or_default();
    let mut events = Vec::new();
    let spelled: Option<String> =
        entries.iter().map(|e| e.get("token").and_then(Value::as_str)).collect::<Option<Vec<_>>>().map(|v| v.concat());
    if !entries.is_empty() && spelled.as_deref() == Some(text.as_str()) {
        for e in &entries {
            let token = e.get("token").and_then(Value::as_str).unwrap_or_default();
            events.push(TokenEvent { text: token.into(), top_logprobs: entry_logprobs(e), continuation: false }.normalized());
        }
    } else if !text.is_empty() {
        let top = entries.first().and_then(entry_logprobs);
        events.push(TokenEvent { text, top_logprobs: top, continuation: false }.normalized());
    }
    Ok(SseLine::Events { events, finished })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> HttpSettings {
        HttpSettings { base_url: Some("http://localhost:8000".into()), model: Some("m".into()), ..Default::default() }
    }

    #[test]
    fn endpoint_does_not_double_v1() {
        let mut c = settings().resolve_with(|_| None).unwrap();
        assert_eq!(c.endpoint(), "http://localhost:8000/v1/chat/completions");
        c.base_url = "http://h/v1/".into();
        assert_eq!(c.endpoint(), "http://h/v1/chat/completions");
    }

    #[test]
    fn env_fallbacks() {
        let env = |names: &[&str]| match names[0] {
            "TRACEWARDEN_BASE_URL" => Some("https://x".to_string()),
            "TRACEWARDEN_MODEL" => Some("qwen".to_string()),
            "TRACEWARDEN_API_KEY" => Some("k".to_string()),
            _ => None,
        };
        let c = HttpSettings::default().resolve_with(env).unwrap();
        assert_eq!((c.base_url.as_str(), c.model.as_str(), c.api_key.as_deref()), ("https://x", "qwen", Some("k")));
        assert!(HttpSettings::default().resolve_with(|_| None).is_err());
        let bad = HttpSettings { top_logprobs: Some(21), ..settings() };
        assert!(bad.resolve_with(|_| None).is_err());
        let missing = HttpSettings { api_key_env: Some("NOPE".into()), ..settings() };
        assert!(missing.resolve_with(|_| None).is_err());
    }

    #[test]
    fn sse_lines() {
        assert_eq!(parse_sse_line(": keepalive\n").unwrap(), SseLine::Skip);
        assert_eq!(parse_sse_line("data: [DONE]\n").unwrap(), SseLine::Done);
        let line = r#"data: {"choices":[{"delta":{"content":"ab"},"logprobs":{"content":[
            {"token":"a","logprob":-0.1,"top_logprobs":[{"token":"x","logprob":-3.0},{"token":"a","logprob":-0.1}]},
            {"token":"b","logprob":-0.2,"top_logprobs":[]}]},"finish_reason":null}]}"#
            .replace('\n', "");
        let SseLine::Events { events, finished } = parse_sse_line(&line).unwrap() else { panic!() };
        assert!(!finished);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].top_logprobs.as_ref().unwrap()[0].token, "a");
        let plain = r#"data: {"choices":[{"delta":{"content":"hi"},"finish_reason":"stop"}]}"#;
        let SseLine::Events { events, finished } = parse_sse_line(plain).unwrap() else { panic!() };
        assert!(finished);
        assert_eq!(events, vec![TokenEvent::text("hi")]);
        assert!(parse_sse_line("data: {oops").is_err());
    }

    #[test]
    fn request_body_uses_prefill() {
        let f = HttpFactory::new(settings().resolve_with(|_| None).unwrap(), GenerationParams::qwen()).unwrap();
        let b = f.shared.body("Q", "so far", true, 10, 5);
        assert_eq!(b["messages"][1]["content"], "so far");
        assert_eq!(b["continue_final_message"], true);
        assert_eq!(b["top_k"], 20);
        assert_eq!(b["top_logprobs"], 5);
        let b = f.shared.body("Q", "", true, 10, 5);
        assert_eq!(b["messages"].as_array().unwrap().len(), 1);
        assert!(b.get("continue_final_message").is_none());
    }
}
