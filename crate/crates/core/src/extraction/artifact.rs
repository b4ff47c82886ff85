use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{find_ci, lines_from, ExtractedState, Extractor, Line, Payload, ScanOutput, StateKind};
use crate::verdict::Span;

/// Trigger phrases that introduce one kind of artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseFamily {
    pub name: String,
    pub phrases: Vec<String>,
}

impl PhraseFamily {
    pub fn new(name: &str, phrases: &[&str]) -> Self {
        Self { name: name.into(), phrases: phrases.iter().map(|p| String::from(*p)).collect() }
    }

    pub fn code() -> Self {
        Self::new("code", &["the code is", "here is the code", "final code"])
    }

    pub fn precondition() -> Self {
        Self::new("precondition", &["the precondition is", "precondition:"])
    }

    pub fn postcondition() -> Self {
        Self::new("postcondition", &["the postcondition is", "postcondition:"])
    }
}

/// Fenced or indented blocks following a trigger phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactExtractor {
    pub families: Vec<PhraseFamily>,
}

impl Default for ArtifactExtractor {
    fn default() -> Self {
        Self { families: alloc::vec![PhraseFamily::code()] }
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn indented(line: &str) -> Option<&str> {
    line.strip_prefix("    ").or_else(|| line.strip_prefix('\t'))
}

enum Found {
    Block { end: usize, text: String },
    NoBlock,
    Incomplete,
}

impl ArtifactExtractor {
    fn latest_trigger(&self, line: &str) -> Option<(usize, usize, &str)> {
        let mut best: Option<(usize, usize, &str)> = None;
        for fam in &self.families {
            for p in &fam.phrases {
                let mut from = 0;
                while let Some(at) = find_ci(line, p, from) {
                    from = at + 1;
                    if best.is_none_or(|b| at + p.len() > b.1) {
                        best = Some((at, at + p.len(), fam.name.as_str()));
                    }
                }
            }
        }
        best
    }

    fn fenced(text: &str, from: usize, flush: bool) -> Found {
        let mut body = String::new();
        for line in lines_from(text, from) {
            if !line.terminated(flush) {
                return Found::Incomplete;
            }
            if is_fence(line.text) {
                return Found::Block { end: line.next, text: body };
            }
            body.push_str(line.text);
            body.push('\n');
        }
        if flush {
            Found::Block { end: text.len(), text: body }
        } else {
            Found::Incomplete
        }
    }

    fn indented_block(text: &str, first: &Line<'_>, flush: bool) -> Found {
        let mut body = String::new();
        let mut pending_blank = 0;
        for line in lines_from(text, first.start) {
            if !line.terminated(flush) {
                return Found::Incomplete;
            }
            if line.text.trim().is_empty() {
                pending_blank += 1;
                continue;
            }
            match indented(line.text) {
                Some(content) => {
                    for _ in 0..pending_blank {
                        body.push('\n');
                    }
                    pending_blank = 0;
                    body.push_str(content);
                    body.push('\n');
                }
                None => return Found::Block { end: line.start, text: body },
            }
        }
        if flush {
            Found::Block { end: text.len(), text: body }
        } else {
            Found::Incomplete
        }
    }

    fn block_after(text: &str, trigger: &Line<'_>, phrase_end: usize, flush: bool) -> Found {
        if trigger.text[phrase_end..].contains("```") {
            return Self::fenced(text, trigger.next, flush);
        }
        for line in lines_from(text, trigger.next) {
            if !line.terminated(flush) {
                return Found::Incomplete;
            }
            if line.text.trim().is_empty() {
                continue;
            }
            if is_fence(line.text) {
                return Self::fenced(text, line.next, flush);
            }
            if indented(line.text).is_some() {
                return Self::indented_block(text, &line, flush);
            }
            return Found::NoBlock;
        }
        if flush {
            Found::NoBlock
        } else {
            Found::Incomplete
        }
    }
}

impl Extractor for ArtifactExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        let mut states = Vec::new();
        let mut at = cursor;
        'outer: loop {
            for line in lines_from(text, at) {
                if !line.terminated(flush) {
                    break 'outer;
                }
                let Some((_, phrase_end, family)) = self.latest_trigger(line.text) else {
                    at = line.next;
                    continue;
                };
                match Self::block_after(text, &line, phrase_end, flush) {
                    Found::Block { end, text: body } => {
                        states.push(ExtractedState::new(
                            StateKind::ArtifactBlock,
                            Payload::Artifact { family: family.into(), text: body },
                            Span::new(line.start, end),
                        ));
                        at = end;
                        continue 'outer;
                    }
                    Found::NoBlock => at = line.next,
                    Found::Incomplete => break 'outer,
                }
            }
            break;
        }
        ScanOutput { states, cursor: at }
    }
}
