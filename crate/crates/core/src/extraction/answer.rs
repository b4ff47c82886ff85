use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{find_ci, line_start_of, lines_from, starts_with_ci, ExtractedState, Extractor, Payload, ScanOutput, StateKind};
use crate::verdict::Span;

/// Answer proposals ("the answer is B", `\boxed{C}`), latest match per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerExtractor {
    /// Lower-case trigger phrases.
    pub phrases: Vec<String>,
    /// Single-token option labels, matched case-sensitively.
    pub labels: Vec<String>,
    /// `(label, option text)` pairs; option text matches case-insensitively.
    pub options: Vec<(String, String)>,
    pub boxed: bool,
}

impl Default for AnswerExtractor {
    fn default() -> Self {
        Self {
            phrases: ["the answer is", "answer is", "answer:", "final answer"].map(String::from).to_vec(),
            labels: ["A", "B", "C", "D"].map(String::from).to_vec(),
            options: Vec::new(),
            boxed: true,
        }
    }
}

const SKIP: &[char] = &[' ', '\t', ':', '*', '(', '"', '\'', '`', '$', '=', '['];

impl AnswerExtractor {
    pub fn with_options(options: Vec<(String, String)>) -> Self {
        Self { options, ..Self::default() }
    }

    /// Resolves a token to a label: a bare label, a label followed by a
    /// non-alphanumeric character, or an option's text.
    fn option_at(&self, s: &str) -> Option<(String, usize)> {
        for label in &self.labels {
            if let Some(rest) = s.strip_prefix(label.as_str()) {
                if !rest.chars().next().is_some_and(|c| c.is_alphanumeric()) {
                    return Some((label.clone(), label.len()));
                }
            }
        }
        let mut best: Option<(String, usize)> = None;
        for (label, text) in &self.options {
            if !text.is_empty() && starts_with_ci(s, text) {
                let rest = &s[text.len()..];
                if !rest.chars().next().is_some_and(|c| c.is_alphanumeric())
                    && best.as_ref().is_none_or(|b| text.len() > b.1)
                {
                    best = Some((label.clone(), text.len()));
                }
            }
        }
        best
    }

    fn boxed_label(&self, content: &str) -> String {
        let content = content.trim();
        match self.option_at(content) {
            Some((label, _)) => label,
            None => content.to_string(),
        }
    }

    fn matches_in(&self, line: &str, base: usize) -> Vec<(Span, StateKind, String)> {
        let mut found = Vec::new();
        for phrase in &self.phrases {
            let mut from = 0;
            while let Some(at) = find_ci(line, phrase, from) {
                from = at + 1;
                let mut i = at + phrase.len();
                i += line[i..].len() - line[i..].trim_start_matches(SKIP).len();
                if starts_with_ci(&line[i..], "is ") {
                    i += 3;
                    i += line[i..].len() - line[i..].trim_start_matches(SKIP).len();
                }
                if starts_with_ci(&line[i..], "option ") {
                    i += 7;
                }
                if line[i..].starts_with("\\boxed{") {
                    continue;
                }
                if let Some((label, n)) = self.option_at(&line[i..]) {
                    found.push((Span::new(base + at, base + i + n), StateKind::AnswerProposal, label));
                }
            }
        }
        if self.boxed {
            let mut from = 0;
            while let Some(rel) = line[from..].find("\\boxed{") {
                let at = from + rel;
                let open = at + "\\boxed{".len();
                from = open;
                let mut depth = 1;
                let close = line[open..].char_indices().find_map(|(j, c)| {
                    match c {
                        '{' => depth += 1,
                        '}' => depth -= 1,
                        _ => {}
                    }
                    (depth == 0).then_some(open + j)
                });
                if let Some(close) = close {
                    let content = &line[open..close];
                    if !content.trim().is_empty() {
                        found.push((Span::new(base + at, base + close + 1), StateKind::BoxedAnswer, self.boxed_label(content)));
                    }
                }
            }
        }
        found
    }

    /// The latest proposal in `text` after `cursor`, with the cursor to resume from.
    pub fn extract_latest(&self, text: &str, cursor: usize) -> Option<(String, usize)> {
        let out = self.scan(text, cursor, true);
        let last = out.states.into_iter().last()?;
        match last.payload {
            Payload::Answer { label } => Some((label, out.cursor)),
            _ => None,
        }
    }
}

impl Extractor for AnswerExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        let mut out = ScanOutput { states: vec![], cursor };
        let start = line_start_of(text, cursor);
        for line in lines_from(text, start) {
            if !line.terminated(flush) {
                break;
            }
            let latest = self
                .matches_in(line.text, line.start)
                .into_iter()
                .filter(|(span, _, _)| span.end > cursor)
                .max_by_key(|(span, _, _)| (span.end, core::cmp::Reverse(span.start)));
            if let Some((span, kind, label)) = latest {
                out.states.push(ExtractedState::new(kind, Payload::Answer { label }, span));
            }
            out.cursor = line.next.max(cursor);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::replay_split;
    use alloc::string::ToString;

    fn labels(states: &[ExtractedState]) -> Vec<String> {
        states
            .iter()
            .map(|s| match &s.payload {
                Payload::Answer { label } => label.clone(),
                _ => "?".to_string(),
            })
            .collect()
    }

    #[test]
    fn phrase_then_letter() {
        let ex = AnswerExtractor::default();
        let out = ex.scan("so the answer is B because of the turn", 0, true);
        assert_eq!(labels(&out.states), ["B"]);
        assert_eq!(out.states[0].kind, StateKind::AnswerProposal);
    }

    #[test]
    fn boxed_letter() {
        let ex = AnswerExtractor::default();
        let out = ex.scan("therefore \\boxed{C}", 0, true);
        assert_eq!(labels(&out.states), ["C"]);
        assert_eq!(out.states[0].kind, StateKind::BoxedAnswer);
    }

    #[test]
    fn incomplete_proposal_is_absent() {
        let ex = AnswerExtractor::default();
        assert!(ex.scan("the answer is probably one of", 0, true).states.is_empty());
        assert!(ex.scan("the answer is a bit unclear\n", 0, true).states.is_empty());
    }

    #[test]
    fn partial_line_is_withheld() {
        let ex = AnswerExtractor::default();
        let out = ex.scan("x\nthe answer is B", 0, false);
        assert!(out.states.is_empty());
        assert_eq!(out.cursor, 2);
        let out = ex.scan("x\nthe answer is B\n", out.cursor, false);
        assert_eq!(labels(&out.states), ["B"]);
        assert_eq!(out.cursor, 18);
    }

    #[test]
    fn latest_per_line() {
        let ex = AnswerExtractor::default();
        let out = ex.scan("the answer is A, no wait, the answer is C.\nAnswer: D\n", 0, false);
        assert_eq!(labels(&out.states), ["C", "D"]);
    }

    #[test]
    fn option_text_maps_to_label() {
        let ex = AnswerExtractor::with_options(vec![
            ("A".into(), "Northeast".into()),
            ("B".into(), "Southwest".into()),
        ]);
        let out = ex.scan(">>> FINAL ANSWER: Northeast\n\\boxed{A}\n", 0, false);
        assert_eq!(labels(&out.states), ["A", "A"]);
    }

    #[test]
    fn boxed_free_content_is_kept() {
        let ex = AnswerExtractor::default();
        let out = ex.scan("\\boxed{(10-4)*(5-1)}\n", 0, false);
        assert_eq!(labels(&out.states), ["(10-4)*(5-1)"]);
    }

    #[test]
    fn continuation_after_injected_prompt() {
        // cursor sits mid-line after an injected "The final answer is"
        let ex = AnswerExtractor::default();
        let text = "the answer is A\n</think>\nThe final answer is B.";
        let cursor = text.len() - 3;
        let out = ex.scan(text, cursor, true);
        assert_eq!(labels(&out.states), ["B"]);
    }

    #[test]
    fn byte_split_replay_matches_whole_scan() {
        let ex = AnswerExtractor::default();
        let text = "Let me think.\nthe answer is A\nhmm, maybe the answer is B\nyes, the answer is B\n\\boxed{B}";
        let whole = replay_split(&ex, text, &[]);
        assert_eq!(labels(&whole), ["A", "B", "B", "B"]);
        for at in 0..=text.len() {
            assert_eq!(replay_split(&ex, text, &[at]), whole, "split at {at}");
        }
    }
}
