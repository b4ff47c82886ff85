//! The single evolving output trace and the edits a monitor may apply to it.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::Span;

pub const END_THINK: &str = "</think>";
pub const DEFAULT_FEEDBACK_PREFIX: &str = "Wait, ";
pub const THOUGHT_FEEDBACK_PREFIX: &str = "#Thought: ";
pub const DEFAULT_FINAL_ANSWER_PROMPT: &str = "\nThe final answer is";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Model,
    Intervention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub origin: Origin,
    pub token_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("end-of-thinking was already injected")]
    ThinkAlreadyClosed,
    #[error("the trace is halted")]
    Halted,
    #[error("span {start}..{end} is not inside generated model text")]
    SpanOutsideModelText { start: usize, end: usize },
    #[error("inject-text action without a payload")]
    MissingPayload,
}

/// Prompt plus an ordered list of model-generated and injected segments.
///
/// Consecutive model tokens are merged into one segment. `cursor` marks how
/// much of the body has already been scanned for states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "StoredTrace")]
pub struct ReasoningTrace {
    prompt: String,
    segments: Vec<Segment>,
    #[serde(skip)]
    body: String,
    cursor: usize,
    think_closed: bool,
    #[serde(default)]
    halted: bool,
}

#[derive(Deserialize)]
struct StoredTrace {
    prompt: String,
    segments: Vec<Segment>,
    cursor: usize,
    think_closed: bool,
    #[serde(default)]
    halted: bool,
}

impl From<StoredTrace> for ReasoningTrace {
    fn from(t: StoredTrace) -> Self {
        let mut out = ReasoningTrace::from_parts(t.prompt, t.segments, t.think_closed);
        out.cursor = t.cursor.min(out.body.len());
        out.halted = t.halted;
        out
    }
}

impl ReasoningTrace {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            segments: Vec::new(),
            body: String::new(),
            cursor: 0,
            think_closed: false,
            halted: false,
        }
    }

    /// Rebuilds the derived body after deserialization.
    pub fn from_parts(prompt: String, segments: Vec<Segment>, think_closed: bool) -> Self {
        let body: String = segments.iter().map(|s| s.text.as_str()).collect();
        let cursor = body.len();
        Self { prompt, segments, body, cursor, think_closed, halted: false }
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Concatenation of every segment.
    pub fn body(&self) -> &str {
        &self.body
    }

    /// Concatenation of the model segments only.
    pub fn model_text(&self) -> String {
        self.segments
            .iter()
            .filter(|s| s.origin == Origin::Model)
            .map(|s| s.text.as_str())
            .collect()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn set_cursor(&mut self, cursor: usize) {
        debug_assert!(cursor >= self.cursor || cursor <= self.body.len());
        self.cursor = cursor.min(self.body.len());
    }

    pub fn think_closed(&self) -> bool {
        self.think_closed
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Tokens produced by the model ("reasoning tokens").
    pub fn model_tokens(&self) -> u64 {
        self.token_sum(Origin::Model)
    }

    pub fn injected_tokens(&self) -> u64 {
        self.token_sum(Origin::Intervention)
    }

    fn token_sum(&self, origin: Origin) -> u64 {
        self.segments.iter().filter(|s| s.origin == origin).map(|s| s.token_count).sum()
    }

    pub fn intervention_count(&self) -> usize {
        self.segments.iter().filter(|s| s.origin == Origin::Intervention).count()
    }

    /// Byte ranges of each segment within the body.
    pub fn segment_spans(&self) -> Vec<(Span, Origin)> {
        let mut at = 0;
        self.segments
            .iter()
            .map(|s| {
                let span = Span::new(at, at + s.text.len());
                at = span.end;
                (span, s.origin)
            })
            .collect()
    }

    /// Appends model output. A model-emitted `</think>` closes the think region.
    pub fn push_model(&mut self, text: &str, tokens: u64) {
        if !self.think_closed && text_closes_think(&self.body, text) {
            self.think_closed = true;
        }
        self.body.push_str(text);
        match self.segments.last_mut() {
            Some(seg) if seg.origin == Origin::Model => {
                seg.text.push_str(text);
                seg.token_count += tokens;
            }
            _ => self.segments.push(Segment { text: text.into(), origin: Origin::Model, token_count: tokens }),
        }
    }

    fn push_intervention(&mut self, text: String) {
        let tokens = approx_token_count(&text);
        self.body.push_str(&text);
        self.segments.push(Segment { text, origin: Origin::Intervention, token_count: tokens });
        self.cursor = self.body.len();
    }

    /// The cut point of a state must fall inside model text.
    fn span_in_model_text(&self, span: Span) -> bool {
        span.end <= self.body.len()
            && self
                .segment_spans()
                .iter()
                .any(|(s, o)| *o == Origin::Model && s.start < span.end && span.end <= s.end)
    }

    /// Drops body text after `at`. Tokens already paid for stay on the
    /// segment that was cut; whole model segments past `at` fold their
    /// tokens into the last kept model segment.
    fn truncate_body(&mut self, at: usize) {
        if at >= self.body.len() {
            return;
        }
        let spans = self.segment_spans();
        let mut dropped_tokens = 0;
        let mut keep = self.segments.len();
        for (i, (span, _)) in spans.iter().enumerate().rev() {
            if span.start >= at && !span.is_empty() {
                dropped_tokens += self.segments[i].token_count;
                keep = i;
            } else {
                break;
            }
        }
        self.segments.truncate(keep);
        if let Some(last) = self.segments.last_mut() {
            let start = spans[keep - 1].0.start;
            last.text.truncate(at - start);
            last.token_count += dropped_tokens;
        }
        self.body.truncate(at);
        self.cursor = self.cursor.min(at);
    }
}

fn text_closes_think(body: &str, text: &str) -> bool {
    if text.contains(END_THINK) {
        return true;
    }
    // the marker may straddle the previous chunk
    let tail_start = body.len().saturating_sub(END_THINK.len());
    let tail_start = (tail_start..=body.len()).find(|&i| body.is_char_boundary(i)).unwrap_or(body.len());
    let mut joined = String::from(&body[tail_start..]);
    joined.push_str(text);
    joined.contains(END_THINK)
}

/// Injected text has no backend tokenization; count whitespace-separated pieces.
pub fn approx_token_count(text: &str) -> u64 {
    (text.split_whitespace().count() as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Continue,
    InjectText,
    InjectEndThink,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsertAt {
    /// Cut the body right after the state span, then append.
    AfterState,
    AtTail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub insert_at: InsertAt,
}

impl InterventionAction {
    pub fn continue_() -> Self {
        Self { kind: ActionKind::Continue, payload: None, insert_at: InsertAt::AtTail }
    }

    pub fn inject_text(payload: impl Into<String>, insert_at: InsertAt) -> Self {
        Self { kind: ActionKind::InjectText, payload: Some(payload.into()), insert_at }
    }

    pub fn end_think(insert_at: InsertAt) -> Self {
        Self { kind: ActionKind::InjectEndThink, payload: None, insert_at }
    }

    pub fn halt() -> Self {
        Self { kind: ActionKind::Halt, payload: None, insert_at: InsertAt::AtTail }
    }
}

/// Strings used when rendering interventions into the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionStyle {
    pub feedback_prefix: String,
    pub final_answer_prompt: String,
}

impl Default for InterventionStyle {
    fn default() -> Self {
        Self {
            feedback_prefix: DEFAULT_FEEDBACK_PREFIX.into(),
            final_answer_prompt: DEFAULT_FINAL_ANSWER_PROMPT.into(),
        }
    }
}

impl InterventionStyle {
    pub fn feedback_text(&self, payload: &str) -> String {
        let mut s = String::with_capacity(self.feedback_prefix.len() + payload.len() + 1);
        s.push_str(&self.feedback_prefix);
        s.push_str(payload);
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    }

    pub fn end_think_text(&self) -> String {
        let mut s = String::from(END_THINK);
        s.push_str(&self.final_answer_prompt);
        s
    }
}

/// Applies `action` to `trace`. `span` locates the state that triggered it.
pub fn apply_intervention(
    trace: &mut ReasoningTrace,
    action: &InterventionAction,
    span: Span,
    style: &InterventionStyle,
) -> Result<(), TraceError> {
    if action.kind == ActionKind::Continue {
        return Ok(());
    }
    if trace.halted {
        return Err(TraceError::Halted);
    }
    let cut = |trace: &mut ReasoningTrace| -> Result<(), TraceError> {
        if action.insert_at == InsertAt::AfterState {
            if !trace.span_in_model_text(span) {
                return Err(TraceError::SpanOutsideModelText { start: span.start, end: span.end });
            }
            trace.truncate_body(span.end);
        }
        Ok(())
    };
    match action.kind {
        ActionKind::Continue => Ok(()),
        ActionKind::InjectText => {
            let payload = action.payload.as_deref().ok_or(TraceError::MissingPayload)?;
            cut(trace)?;
            trace.push_intervention(style.feedback_text(payload));
            Ok(())
        }
        ActionKind::InjectEndThink => {
            if trace.think_closed {
                return Err(TraceError::ThinkAlreadyClosed);
            }
            cut(trace)?;
            trace.push_intervention(style.end_think_text());
            trace.think_closed = true;
            Ok(())
        }
        ActionKind::Halt => {
            trace.halted = true;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReasoningTrace {
        let mut t = ReasoningTrace::new("prompt");
        for tok in ["step 1\n", "step 2\n", "step 3\n", "more"] {
            t.push_model(tok, 1);
        }
        t
    }

    #[test]
    fn continue_is_identity() {
        let mut t = sample();
        let before = t.clone();
        apply_intervention(&mut t, &InterventionAction::continue_(), Span::new(0, 3), &Default::default()).unwrap();
        assert_eq!(t, before);
    }

    #[test]
    fn inject_text_after_state_cuts_and_appends() {
        let mut t = sample();
        let span = Span::new(14, 21); // "step 3\n"
        assert_eq!(&t.body()[span.start..span.end], "step 3\n");
        let action = InterventionAction::inject_text("this step is inconsistent.", InsertAt::AfterState);
        apply_intervention(&mut t, &action, span, &Default::default()).unwrap();
        assert_eq!(t.segments().len(), 2);
        let seg = &t.segments()[1];
        assert_eq!(seg.origin, Origin::Intervention);
        assert!(seg.text.starts_with("Wait"));
        assert!(t.body().starts_with("step 1\nstep 2\nstep 3\nWait, this step"));
        // tokens for the discarded tail are still counted
        assert_eq!(t.model_tokens(), 4);
        assert_eq!(t.cursor(), t.body().len());
    }

    #[test]
    fn end_think_sets_flag_once() {
        let mut t = sample();
        let a = InterventionAction::end_think(InsertAt::AtTail);
        apply_intervention(&mut t, &a, Span::new(0, 0), &Default::default()).unwrap();
        assert!(t.body().ends_with("</think>\nThe final answer is"));
        assert!(t.think_closed());
        assert_eq!(
            apply_intervention(&mut t, &a, Span::new(0, 0), &Default::default()),
            Err(TraceError::ThinkAlreadyClosed)
        );
    }

    #[test]
    fn thought_prefix_is_supported() {
        let mut t = sample();
        let style = InterventionStyle { feedback_prefix: THOUGHT_FEEDBACK_PREFIX.into(), ..Default::default() };
        let a = InterventionAction::inject_text("recheck.", InsertAt::AtTail);
        apply_intervention(&mut t, &a, Span::new(0, 0), &style).unwrap();
        assert!(t.body().ends_with("#Thought: recheck.\n"));
    }

    #[test]
    fn halt_freezes() {
        let mut t = sample();
        apply_intervention(&mut t, &InterventionAction::halt(), Span::default(), &Default::default()).unwrap();
        assert!(t.is_halted());
        let a = InterventionAction::inject_text("x", InsertAt::AtTail);
        assert_eq!(apply_intervention(&mut t, &a, Span::default(), &Default::default()), Err(TraceError::Halted));
    }

    #[test]
    fn span_in_injected_text_is_rejected() {
        let mut t = sample();
        let a = InterventionAction::inject_text("x", InsertAt::AtTail);
        apply_intervention(&mut t, &a, Span::default(), &Default::default()).unwrap();
        let len = t.body().len();
        let b = InterventionAction::inject_text("y", InsertAt::AfterState);
        assert!(matches!(
            apply_intervention(&mut t, &b, Span::new(len - 2, len), &Default::default()),
            Err(TraceError::SpanOutsideModelText { .. })
        ));
    }

    #[test]
    fn model_end_think_straddling_chunks_closes_region() {
        let mut t = ReasoningTrace::new("p");
        t.push_model("done </thi", 1);
        assert!(!t.think_closed());
        t.push_model("nk> B", 1);
        assert!(t.think_closed());
    }

    #[test]
    fn reasoning_tokens_exclude_injections() {
        let mut t = sample();
        let a = InterventionAction::inject_text("three word payload", InsertAt::AtTail);
        apply_intervention(&mut t, &a, Span::default(), &Default::default()).unwrap();
        t.push_model("after", 2);
        assert_eq!(t.model_tokens(), 6);
        assert_eq!(t.injected_tokens(), 4);
        assert_eq!(t.model_text(), "step 1\nstep 2\nstep 3\nmoreafter");
    }

    #[test]
    fn json_round_trip_rebuilds_body() {
        let mut t = ReasoningTrace::new("p");
        t.push_model("a b\n", 2);
        let a = InterventionAction::inject_text("no", InsertAt::AtTail);
        apply_intervention(&mut t, &a, Span::default(), &InterventionStyle::default()).unwrap();
        let back: ReasoningTrace = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.body(), "a b\nWait, no\n");
    }
}
