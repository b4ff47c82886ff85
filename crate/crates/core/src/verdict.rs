use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Half-open byte range `[start, end)` into a trace body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn shifted(self, by: usize) -> Self {
        Self::new(self.start + by, self.end + by)
    }
}

/// Outcome of checking one extracted state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default)]
    pub state_span: Span,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { pass: true, feedback: None, state_span: Span::default() }
    }

    pub fn fail(feedback: impl Into<String>) -> Self {
        Self { pass: false, feedback: Some(feedback.into()), state_span: Span::default() }
    }

    /// A failing verdict without text, for verifiers that only report pass/fail.
    pub fn fail_silent() -> Self {
        Self { pass: false, feedback: None, state_span: Span::default() }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.state_span = span;
        self
    }
}
