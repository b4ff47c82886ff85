//! The streaming-generation interface, plus a scripted mock backend.

mod mock;
mod split;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::ReasoningTrace;

pub use mock::{MockFactory, MockNode, MockScript, MockSession, MockToken, ProbeEntry, PromptRoute, TailSpec};
pub use split::{SplitFactory, SplitPlan, SplitSession};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    /// `None` means unlimited.
    #[serde(default)]
    pub top_k: Option<u32>,
    pub max_tokens: u32,
}

impl GenerationParams {
    pub const fn qwen() -> Self {
        Self { temperature: 0.6, top_p: 0.95, top_k: Some(20), max_tokens: 32_768 }
    }

    pub const fn phi() -> Self {
        Self { temperature: 0.8, top_p: 0.95, top_k: Some(50), max_tokens: 32_768 }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Configuration(m.into()));
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.top_k == Some(0) {
            return bad("top_k must be positive");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::qwen()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

impl TopLogprob {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self { token: token.into(), logprob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<TopLogprob>>,
    /// Set on fragments of a token that was split in transit; such fragments
    /// do not count as tokens.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub continuation: bool,
}

impl TokenEvent {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), top_logprobs: None, continuation: false }
    }

    /// Sorts logprobs descending and keeps at most 20.
    pub fn normalized(mut self) -> Self {
        if let Some(lp) = self.top_logprobs.as_mut() {
            lp.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
            lp.truncate(20);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub backend: String,
    pub model: String,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("network error: {message}")]
    Network { message: String, retryable: bool },
    #[error("mock script has no continuation for this injection: {0}")]
    ScriptGap(String),
    #[error("backend cannot do this: {0}")]
    Capability(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// One live generation. Not shareable between consumers.
pub trait GenerationSession: Send {
    fn descriptor(&self) -> &SessionDescriptor;

    /// The next streamed token, or `None` at a natural stop or after `cancel`.
    fn next_event(&mut self) -> Result<Option<TokenEvent>, BackendError>;

    /// Restarts the stream conditioned on the amended trace.
    fn continue_from(&mut self, trace: &ReasoningTrace) -> Result<(), BackendError>;

    fn cancel(&mut self);

    /// Idempotent.
    fn close(&mut self) {}

    /// Next-token distribution after `context` + `suffix`, committing nothing.
    /// `context` is the trace body up to the probe point.
    fn probe_next_distribution(&mut self, context: &str, suffix: &str) -> Result<Vec<TopLogprob>, BackendError>;
}

impl<S: GenerationSession + ?Sized> GenerationSession for Box<S> {
    fn descriptor(&self) -> &SessionDescriptor {
        (**self).descriptor()
    }
    fn next_event(&mut self) -> Result<Option<TokenEvent>, BackendError> {
        (**self).next_event()
    }
    fn continue_from(&mut self, trace: &ReasoningTrace) -> Result<(), BackendError> {
        (**self).continue_from(trace)
    }
    fn cancel(&mut self) {
        (**self).cancel()
    }
    fn close(&mut self) {
        (**self).close()
    }
    fn probe_next_distribution(&mut self, context: &str, suffix: &str) -> Result<Vec<TopLogprob>, BackendError> {
        (**self).probe_next_distribution(context, suffix)
    }
}

/// Opens sessions for a prompt; `sample` distinguishes independent samples.
pub trait SessionFactory: Send + Sync {
    fn open(&self, prompt: &str, sample: u32) -> Result<Box<dyn GenerationSession>, BackendError>;
}

/// Plays a session to its natural end without monitoring.
pub fn playback(session: &mut dyn GenerationSession) -> Result<(String, u64), BackendError> {
    let mut text = String::new();
    let mut tokens = 0;
    while let Some(ev) = session.next_event()? {
        text.push_str(&ev.text);
        tokens += u64::from(!ev.continuation);
    }
    Ok((text, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        assert!(GenerationParams::qwen().validate().is_ok());
        assert!(GenerationParams::phi().validate().is_ok());
        let p = GenerationParams { top_p: 0.0, ..GenerationParams::qwen() };
        assert!(p.validate().is_err());
        let p = GenerationParams { temperature: f64::NAN, ..GenerationParams::qwen() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn logprobs_are_sorted() {
        let ev = TokenEvent {
            text: "x".into(),
            top_logprobs: Some(alloc::vec![TopLogprob::new("a", -2.0), TopLogprob::new("b", -0.1)]),
            continuation: false,
        }
        .normalized();
        assert_eq!(ev.top_logprobs.unwrap()[0].token, "b");
    }
}
