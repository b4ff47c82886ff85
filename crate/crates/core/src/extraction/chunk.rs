use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ExtractedState, Extractor, Payload, ScanOutput, StateKind};
use crate::verdict::Span;

/// Where reasoning chunks end.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ChunkRule {
    /// A run of whitespace containing at least two newlines.
    #[default]
    BlankLine,
    /// Any line that begins with one of the markers, e.g. "Wait".
    LinePrefix { markers: Vec<alloc::string::String> },
}

/// Boundaries are reported at the first non-whitespace byte of the next chunk,
/// so a boundary is only known once that byte has streamed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkExtractor {
    #[serde(flatten)]
    pub rule: ChunkRule,
}

/// Offsets of chunk boundaries at or after `cursor`.
pub fn chunk_boundaries(text: &str, cursor: usize) -> Vec<usize> {
    ChunkExtractor::default().scan(text, cursor, true).states.iter().map(|s| s.span.start).collect()
}

impl Extractor for ChunkExtractor {
    fn scan(&self, text: &str, cursor: usize, _flush: bool) -> ScanOutput {
        let mut states = Vec::new();
        let bytes = text.as_bytes();
        // the whitespace run containing the cursor may have started earlier
        let mut run_start = cursor;
        while run_start > 0 && bytes[run_start - 1].is_ascii_whitespace() {
            run_start -= 1;
        }
        let mut newlines = bytes[run_start..cursor].iter().filter(|&&b| b == b'\n').count();
        let mut resume = cursor;
        let mut i = cursor;
        while i < bytes.len() {
            let b = bytes[i];
            if b.is_ascii_whitespace() {
                if b == b'\n' {
                    newlines += 1;
                }
                i += 1;
                continue;
            }
            let hit = match &self.rule {
                ChunkRule::BlankLine => newlines >= 2,
                ChunkRule::LinePrefix { markers } => {
                    if newlines == 0 {
                        false
                    } else {
                        let full = markers.iter().all(|m| text.len() - i >= m.len() || !m.starts_with(&text[i..]));
                        if !full {
                            // could still become a marker
                            break;
                        }
                        markers.iter().any(|m| text[i..].starts_with(m.as_str()))
                    }
                }
            };
            if hit && i > 0 {
                states.push(ExtractedState::new(StateKind::ChunkBoundary, Payload::Chunk, Span::new(i, i)));
            }
            newlines = 0;
            i += 1;
            resume = i;
        }
        ScanOutput { states, cursor: resume }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::replay_split;
    use alloc::string::String;
    use alloc::vec;

    #[test]
    fn paragraph_breaks() {
        assert_eq!(chunk_boundaries("a\n\nb\n\nc", 0), vec![3, 6]);
        assert!(chunk_boundaries("a\nb\nc", 0).is_empty());
        assert_eq!(chunk_boundaries("a\n \n\n  b", 0), vec![7]);
    }

    #[test]
    fn trailing_blank_lines_are_not_boundaries_yet() {
        assert!(chunk_boundaries("a\n\n", 0).is_empty());
    }

    #[test]
    fn split_invariance() {
        let ex = ChunkExtractor::default();
        let text = "First.\n\nSecond para\nline.\n\n\nThird\n\nend";
        let whole = replay_split(&ex, text, &[]);
        assert_eq!(whole.len(), 3);
        for a in 0..=text.len() {
            for b in a..=text.len() {
                assert_eq!(replay_split(&ex, text, &[a, b]), whole);
            }
        }
    }

    #[test]
    fn line_prefix_rule() {
        let ex = ChunkExtractor { rule: ChunkRule::LinePrefix { markers: vec![String::from("Wait")] } };
        let text = "one\nWait, two\nno Wait\nWait three";
        let whole = replay_split(&ex, text, &[]);
        assert_eq!(whole.iter().map(|s| s.span.start).collect::<Vec<_>>(), vec![4, 22]);
        for a in 0..=text.len() {
            assert_eq!(replay_split(&ex, text, &[a]), whole);
        }
    }
}
