//! Pattern extractors that recover metaprompt-induced states from free text.
//!
//! Every extractor scans forward from a cursor and reports only states whose
//! terminator has already streamed (end of line, next `>>>` marker, closing
//! fence). With `flush` set, text at the end of the input counts as terminated.
//! Windows are fixed by the text alone, so the emitted sequence does not depend
//! on how the stream was chunked.

mod answer;
mod artifact;
mod chunk;
mod equation;
mod maze;
mod spatial;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::maze::{MazeStepPayload, Pos};
use crate::spatial::{DiagRelation, SpatialClaim};
use crate::trace::ReasoningTrace;
use crate::verdict::Span;

pub use answer::AnswerExtractor;
pub use artifact::{ArtifactExtractor, PhraseFamily};
pub use chunk::{chunk_boundaries, ChunkExtractor, ChunkRule};
pub use equation::EquationExtractor;
pub use maze::{parse_pos, MazeExtractor};
pub use spatial::{parse_relation_line, RelationLine, SpatialExtractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateKind {
    AnswerProposal,
    BoxedAnswer,
    MazeLocate,
    MazeStep,
    SpatialRelationSet,
    SpatialConclusion,
    Equation,
    ArtifactBlock,
    ChunkBoundary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Answer { label: String },
    Equation { expr: String },
    MazeStep(MazeStepPayload),
    MazeLocate { s: Option<Pos>, e: Option<Pos> },
    RelationSet { relations: Vec<DiagRelation> },
    Conclusion(SpatialClaim),
    Artifact { family: String, text: String },
    Chunk,
    /// The format prefix matched but the contents did not parse.
    Malformed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedState {
    pub kind: StateKind,
    pub payload: Payload,
    pub span: Span,
}

impl ExtractedState {
    pub fn new(kind: StateKind, payload: Payload, span: Span) -> Self {
        Self { kind, payload, span }
    }

    pub fn is_malformed(&self) -> bool {
        matches!(self.payload, Payload::Malformed { .. })
    }

    /// Text form of the payload for stability comparison.
    pub fn payload_text(&self) -> String {
        match &self.payload {
            Payload::Answer { label } => label.clone(),
            Payload::Equation { expr } => expr.clone(),
            Payload::Artifact { text, .. } => text.clone(),
            _ => self.render(),
        }
    }

    /// A canonical rendering that extracts back to an equal payload.
    pub fn render(&self) -> String {
        match (&self.kind, &self.payload) {
            (StateKind::BoxedAnswer, Payload::Answer { label }) => format!("\\boxed{{{label}}}\n"),
            (_, Payload::Answer { label }) => format!("the answer is {label}\n"),
            (_, Payload::Equation { expr }) => format!("{expr} = 24\n"),
            (_, Payload::MazeStep(step)) => step.render(),
            (_, Payload::MazeLocate { s, e }) => {
                let mut out = String::from(">>> LOCATE START AND EXIT:\n");
                if let Some(s) = s {
                    out.push_str(&format!("  S position: {s}\n"));
                }
                if let Some(e) = e {
                    out.push_str(&format!("  E position: {e}\n"));
                }
                out
            }
            (_, Payload::RelationSet { relations }) => {
                let mut out = String::from(">>> STEP 1: PARSE RELATIONSHIPS\n");
                for r in relations {
                    out.push_str(&format!("- {}\n", r.sentence()));
                }
                out
            }
            (_, Payload::Conclusion(c)) => {
                format!(">>> STEP 3: ANSWER\n- {} is to the {} of {}.\n", c.subject, c.dir, c.object)
            }
            (_, Payload::Artifact { family, text }) => format!("the {family} is:\n```\n{text}```\n"),
            (_, Payload::Chunk) => String::from("\n\n"),
            (_, Payload::Malformed { reason }) => reason.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanOutput {
    pub states: Vec<ExtractedState>,
    pub cursor: usize,
}

/// A pure scanner over trace text. Implementations hold configuration only.
pub trait Extractor: Send + Sync {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput;
}

impl<E: Extractor + ?Sized> Extractor for Box<E> {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        (**self).scan(text, cursor, flush)
    }
}

/// Extractor configuration as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExtractorSpec {
    Answer(AnswerExtractor),
    Equation(EquationExtractor),
    Maze(MazeExtractor),
    Spatial(SpatialExtractor),
    Artifact(ArtifactExtractor),
    Chunk(ChunkExtractor),
}

impl Extractor for ExtractorSpec {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        match self {
            ExtractorSpec::Answer(e) => e.scan(text, cursor, flush),
            ExtractorSpec::Equation(e) => e.scan(text, cursor, flush),
            ExtractorSpec::Maze(e) => e.scan(text, cursor, flush),
            ExtractorSpec::Spatial(e) => e.scan(text, cursor, flush),
            ExtractorSpec::Artifact(e) => e.scan(text, cursor, flush),
            ExtractorSpec::Chunk(e) => e.scan(text, cursor, flush),
        }
    }
}

/// Scans the trace from its cursor and advances the cursor past complete states.
pub fn scan_for_states(trace: &mut ReasoningTrace, extractor: &dyn Extractor, flush: bool) -> Vec<ExtractedState> {
    let out = extractor.scan(trace.body(), trace.cursor(), flush);
    trace.set_cursor(out.cursor.max(trace.cursor()));
    out.states
}

/// Runs `extractor` incrementally over prefixes ending at `splits`, then flushes.
/// Used to check that chunking never changes the state sequence.
pub fn replay_split(extractor: &dyn Extractor, text: &str, splits: &[usize]) -> Vec<ExtractedState> {
    let mut cursor = 0;
    let mut states = Vec::new();
    for &at in splits {
        if at > text.len() || !text.is_char_boundary(at) {
            continue;
        }
        let out = extractor.scan(&text[..at], cursor, false);
        debug_assert!(out.cursor >= cursor);
        cursor = out.cursor;
        states.extend(out.states);
    }
    let out = extractor.scan(text, cursor, true);
    states.extend(out.states);
    states
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Line<'a> {
    pub start: usize,
    /// Offset past the line text, excluding the newline.
    pub end: usize,
    /// Offset of the next line.
    pub next: usize,
    pub complete: bool,
    pub text: &'a str,
}

impl Line<'_> {
    pub fn terminated(&self, flush: bool) -> bool {
        self.complete || flush
    }
}

pub(crate) fn lines_from(text: &str, from: usize) -> impl Iterator<Item = Line<'_>> {
    let mut at = from;
    core::iter::from_fn(move || {
        if at >= text.len() {
            return None;
        }
        let start = at;
        let (end, next, complete) = match text[start..].find('\n') {
            Some(i) => (start + i, start + i + 1, true),
            None => (text.len(), text.len(), false),
        };
        at = next;
        Some(Line { start, end, next, complete, text: &text[start..end] })
    })
}

pub(crate) fn line_start_of(text: &str, at: usize) -> usize {
    text[..at].rfind('\n').map_or(0, |i| i + 1)
}

/// The header text after `>>>` when `line` is a marker line.
pub(crate) fn marker_header(line: &str) -> Option<&str> {
    line.trim_start().strip_prefix(">>>").map(str::trim)
}

/// Strips list bullets, emphasis and surrounding quotes from a content line.
pub(crate) fn strip_decoration(line: &str) -> &str {
    let mut s = line.trim();
    loop {
        let before = s;
        s = s.trim_start_matches("**").trim_end_matches("**").trim();
        for b in ["- ", "* ", "• "] {
            if let Some(rest) = s.strip_prefix(b) {
                s = rest.trim_start();
            }
        }
        if s == before {
            return s;
        }
    }
}

pub(crate) fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    if needle.is_empty() || from > haystack.len() {
        return None;
    }
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    (from..=h.len().saturating_sub(n.len()))
        .find(|&i| h.len() >= n.len() && h[i..i + n.len()].eq_ignore_ascii_case(n))
}

pub(crate) fn starts_with_ci(s: &str, prefix: &str) -> bool {
    s.len() >= prefix.len() && s.as_bytes()[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
}
