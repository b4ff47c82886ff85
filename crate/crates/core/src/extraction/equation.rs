use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{line_start_of, lines_from, ExtractedState, Extractor, Payload, ScanOutput, StateKind};
use crate::verdict::Span;

const OPERATORS: &[char] = &['+', '-', '*', '/', '×', '÷', '−', '–', '⋅'];

fn is_arith(c: char) -> bool {
    c.is_ascii_digit() || OPERATORS.contains(&c) || matches!(c, '(' | ')' | '=' | ' ' | '\t')
}

/// Candidate Game-of-24 expressions whose literals are exactly the inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationExtractor {
    pub inputs: Vec<u64>,
}

impl EquationExtractor {
    pub fn new(inputs: &[u64]) -> Self {
        Self { inputs: inputs.to_vec() }
    }

    fn sorted_inputs(&self) -> Vec<u64> {
        let mut v = self.inputs.clone();
        v.sort_unstable();
        v
    }

    /// Trims a segment to a plausible expression; returns its offset range.
    fn trim_segment(seg: &str) -> (usize, usize) {
        let lead = seg.len() - seg.trim_start_matches(|c: char| c.is_whitespace() || OPERATORS.contains(&c)).len();
        let mut end = seg.trim_end_matches(|c: char| c.is_whitespace() || OPERATORS.contains(&c)).len();
        let mut start = lead.min(end);
        // drop unmatched outer parentheses
        loop {
            let s = &seg[start..end];
            let open = s.matches('(').count();
            let close = s.matches(')').count();
            if open > close && s.starts_with('(') {
                start += 1;
            } else if close > open && s.ends_with(')') {
                end -= 1;
            } else {
                break;
            }
            let t = &seg[start..end];
            start += t.len() - t.trim_start().len();
            end -= t.len() - t.trim_end().len();
        }
        (start, end)
    }

    fn literals(s: &str) -> Vec<u64> {
        s.split(|c: char| !c.is_ascii_digit())
            .filter(|d| !d.is_empty())
            .map(|d| d.parse().unwrap_or(u64::MAX))
            .collect()
    }

    fn candidates(&self, line: &str, base: usize) -> Vec<(Span, String)> {
        let want = self.sorted_inputs();
        let mut found = Vec::new();
        let mut i = 0;
        let bytes: Vec<(usize, char)> = line.char_indices().collect();
        while i < bytes.len() {
            if !is_arith(bytes[i].1) {
                i += 1;
                continue;
            }
            let run_start = bytes[i].0;
            while i < bytes.len() && is_arith(bytes[i].1) {
                i += 1;
            }
            let run_end = bytes.get(i).map_or(line.len(), |b| b.0);
            let run = &line[run_start..run_end];
            let mut seg_start = 0;
            for seg in run.split('=') {
                let (s, e) = Self::trim_segment(seg);
                let expr = &seg[s..e];
                let mut lits = Self::literals(expr);
                lits.sort_unstable();
                if lits == want && expr.contains(OPERATORS) {
                    let at = base + run_start + seg_start + s;
                    found.push((Span::new(at, at + expr.len()), String::from(expr)));
                }
                seg_start += seg.len() + 1;
            }
        }
        found
    }

    /// The latest equation in `text` after `cursor`.
    pub fn extract_latest(&self, text: &str, cursor: usize) -> Option<(String, usize)> {
        let out = self.scan(text, cursor, true);
        let last = out.states.into_iter().last()?;
        match last.payload {
            Payload::Equation { expr } => Some((expr, out.cursor)),
            _ => None,
        }
    }
}

impl Extractor for EquationExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        let mut out = ScanOutput { states: Vec::new(), cursor };
        for line in lines_from(text, line_start_of(text, cursor)) {
            if !line.terminated(flush) {
                break;
            }
            let latest = self
                .candidates(line.text, line.start)
                .into_iter()
                .filter(|(span, _)| span.start >= cursor)
                .max_by_key(|(span, _)| span.end);
            if let Some((span, expr)) = latest {
                // the state owns the rest of its line
                let span = Span::new(span.start, line.next);
                out.states.push(ExtractedState::new(StateKind::Equation, Payload::Equation { expr }, span));
            }
            out.cursor = line.next.max(cursor);
        }
        out
    }
}
