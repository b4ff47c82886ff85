use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    find_ci, line_start_of, lines_from, marker_header, starts_with_ci, strip_decoration, ExtractedState, Extractor,
    Line, Payload, ScanOutput, StateKind,
};
use crate::spatial::{Compass, DiagRelation, SpatialClaim};
use crate::verdict::Span;

/// `STEP 1: PARSE RELATIONSHIPS` sets and conclusions from later steps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialExtractor {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationLine {
    Relation { subject: String, dir: Compass, object: String },
    /// Relation phrasing with an unreadable direction word.
    BadDirection(String),
}

const NAME_FORBIDDEN: &[char] = &[',', ';', ':', '"', '>', '<', '(', ')', '[', ']', '“', '”', '{', '}'];

fn valid_name(s: &str) -> bool {
    !s.is_empty() && !s.contains(NAME_FORBIDDEN) && s.split_whitespace().count() <= 8
}

/// Parses "X is to the Dir of Y" (also "is in the", or "is Dir of" with a known
/// direction word). Anything else is not a relation line.
pub fn parse_relation_line(line: &str) -> Option<RelationLine> {
    let s = strip_decoration(line);
    let s = s.trim_end_matches(['.', '!']).trim();
    let is_at = find_ci(s, " is ", 0)?;
    let subject = s[..is_at].trim();
    let rest = &s[is_at + 4..];
    let (phrased, after) = if starts_with_ci(rest, "to the ") || starts_with_ci(rest, "in the ") {
        (true, &rest[7..])
    } else {
        (false, rest)
    };
    let of_at = find_ci(after, " of ", 0)?;
    let word = after[..of_at].trim();
    let object = after[of_at + 4..].trim();
    if !valid_name(subject) || !valid_name(object) {
        return None;
    }
    match word.parse::<Compass>() {
        Ok(dir) if word.len() > 2 => {
            Some(RelationLine::Relation { subject: subject.to_string(), dir, object: object.to_string() })
        }
        _ if phrased => Some(RelationLine::BadDirection(word.to_string())),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Relations,
    Conclusions,
    Other,
}

fn classify(header: &str) -> Block {
    if find_ci(header, "parse relationships", 0).is_some() {
        return Block::Relations;
    }
    if starts_with_ci(header, "final answer") {
        return Block::Other;
    }
    if starts_with_ci(header, "step") {
        let rest = header[4..].trim_start();
        return match rest.bytes().next() {
            Some(b'1') if !rest[1..].starts_with(|c: char| c.is_ascii_digit()) => Block::Relations,
            Some(b'0'..=b'9') => Block::Conclusions,
            _ => Block::Other,
        };
    }
    if starts_with_ci(header, "answer") {
        return Block::Conclusions;
    }
    Block::Other
}

/// The block kind governing offset `at`, from the nearest marker above it.
fn enclosing_block(text: &str, at: usize) -> Block {
    let mut end = line_start_of(text, at);
    while end > 0 {
        let start = line_start_of(text, end - 1);
        if let Some(h) = marker_header(&text[start..end - 1]) {
            return classify(h);
        }
        end = start;
    }
    Block::Other
}

impl SpatialExtractor {
    /// `Some((state, end))` once the list is terminated; the state is absent for
    /// a resumed list that holds no relation lines.
    fn relation_set(
        text: &str,
        start: usize,
        header: Option<&Line<'_>>,
        flush: bool,
    ) -> Option<(Option<ExtractedState>, usize)> {
        let body_from = header.map_or(start, |h| h.next);
        let mut relations = Vec::new();
        let mut problems = Vec::new();
        let mut end = None;
        for line in lines_from(text, body_from) {
            if marker_header(line.text).is_some() {
                end = Some(line.start);
                break;
            }
            if !line.terminated(flush) {
                return None;
            }
            match parse_relation_line(line.text) {
                Some(RelationLine::Relation { subject, dir, object }) => match dir.diagonal() {
                    Some(d) => relations.push(DiagRelation::new(subject, d, object)),
                    None => problems.push(format!(
                        "\"{}\" uses the cardinal direction {dir}; only Northwest, Northeast, Southwest, Southeast relations are given",
                        strip_decoration(line.text)
                    )),
                },
                Some(RelationLine::BadDirection(w)) => {
                    problems.push(format!("\"{}\" has unknown direction {w:?}", strip_decoration(line.text)))
                }
                None => {}
            }
        }
        let end = match end {
            Some(e) => e,
            None if flush => text.len(),
            None => return None,
        };
        if header.is_none() && relations.is_empty() && problems.is_empty() {
            return Some((None, end));
        }
        let payload = if problems.is_empty() {
            Payload::RelationSet { relations }
        } else {
            Payload::Malformed { reason: problems.join("; ") }
        };
        Some((Some(ExtractedState::new(StateKind::SpatialRelationSet, payload, Span::new(start, end))), end))
    }

    fn conclusion(line: &Line<'_>) -> Option<ExtractedState> {
        let span = Span::new(line.start, line.next);
        let payload = match parse_relation_line(line.text)? {
            RelationLine::Relation { subject, dir, object } => Payload::Conclusion(SpatialClaim::new(subject, dir, object)),
            RelationLine::BadDirection(w) => Payload::Malformed {
                reason: format!("\"{}\" has unknown direction {w:?}", strip_decoration(line.text)),
            },
        };
        Some(ExtractedState::new(StateKind::SpatialConclusion, payload, span))
    }
}

impl Extractor for SpatialExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        let mut states = Vec::new();
        let mut at = cursor;
        let mut mode = enclosing_block(text, cursor);
        if mode == Block::Relations {
            // resumed inside a relation list, e.g. after feedback
            match Self::relation_set(text, at, None, flush) {
                Some((s, end)) => {
                    states.extend(s);
                    at = end;
                    mode = Block::Other;
                }
                None => return ScanOutput { states, cursor: at },
            }
        }
        'outer: loop {
            for line in lines_from(text, at) {
                if !line.terminated(flush) {
                    break 'outer;
                }
                if let Some(h) = marker_header(line.text) {
                    mode = classify(h);
                    if mode == Block::Relations {
                        match Self::relation_set(text, line.start, Some(&line), flush) {
                            Some((s, end)) => {
                                states.extend(s);
                                at = end;
                                mode = Block::Other;
                                continue 'outer;
                            }
                            None => break 'outer,
                        }
                    }
                } else if mode == Block::Conclusions {
                    states.extend(Self::conclusion(&line));
                }
                at = line.next;
            }
            break;
        }
        ScanOutput { states, cursor: at }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::replay_split;
    use crate::spatial::Diagonal;

    const EXAMPLE_TWO: &str = "\
>>> STEP 1: PARSE RELATIONSHIPS

- Olive's Oils is to the Southeast of Quail's Quilts
- Lumber's Marketplace is to the Northeast of Olive's Oils
- Lumber's Marketplace is to the Northeast of Quail's Quilts
- Stingray Shoes is to the Northeast of Quail's Quilts

>>> STEP 2: FIND OBJECTS IN SOUTHWEST OF Lumber's Marketplace

- \"Lumber's Marketplace is to the Northeast of Olive's Oils\" > Olive's Oils is SOUTHWEST of Lumber's Marketplace Correct
- Stingray Shoes is Northwest of Lumber's Marketplace > NOT Southwest
- Objects in Southwest of Lumber's Marketplace: Olive's Oils, Quail's Quilts

>>> STEP 3: ANSWER

- Quail's Quilts is in the Southwest of Lumber's Marketplace.

>>> FINAL ANSWER: Quail's Quilts

\\boxed{D}
";

    #[test]
    fn relation_line_parses_full_names() {
        assert_eq!(
            parse_relation_line("Planetarium Prints is to the Northeast of Police Supply Store"),
            Some(RelationLine::Relation {
                subject: "Planetarium Prints".into(),
                dir: Compass::Northeast,
                object: "Police Supply Store".into()
            })
        );
        assert_eq!(parse_relation_line("- X is to the Upward of Y"), Some(RelationLine::BadDirection("Upward".into())));
        assert_eq!(parse_relation_line("Police Supply Store is in the map."), None);
    }

    #[test]
    fn example_two_states() {
        let out = SpatialExtractor::default().scan(EXAMPLE_TWO, 0, false);
        assert_eq!(out.states.len(), 2, "{:#?}", out.states);
        let Payload::RelationSet { relations } = &out.states[0].payload else { panic!() };
        assert_eq!(relations.len(), 4);
        assert_eq!(relations[0], DiagRelation::new("Olive's Oils", Diagonal::Southeast, "Quail's Quilts"));
        assert_eq!(
            out.states[1].payload,
            Payload::Conclusion(SpatialClaim::new("Quail's Quilts", Compass::Southwest, "Lumber's Marketplace"))
        );
    }

    #[test]
    fn reversed_phrasing_is_kept_verbatim() {
        let out = SpatialExtractor::default().scan(">>> STEP 1: PARSE RELATIONSHIPS\n- B is to the Southeast of A\n", 0, true);
        let Payload::RelationSet { relations } = &out.states[0].payload else { panic!() };
        assert_eq!(relations[0], DiagRelation::new("B", Diagonal::Southeast, "A"));
    }

    #[test]
    fn unknown_direction_in_set_is_flagged() {
        let out = SpatialExtractor::default().scan(">>> STEP 1: PARSE RELATIONSHIPS\n- B is to the Upside of A\n", 0, true);
        assert!(out.states[0].is_malformed());
        assert_eq!(out.states[0].kind, StateKind::SpatialRelationSet);
    }

    #[test]
    fn relation_set_waits_for_the_next_marker() {
        let text = ">>> STEP 1: PARSE RELATIONSHIPS\n- B is to the Southeast of A\n";
        let out = SpatialExtractor::default().scan(text, 0, false);
        assert!(out.states.is_empty());
        assert_eq!(out.cursor, 0);
    }

    #[test]
    fn byte_split_replay() {
        let ex = SpatialExtractor::default();
        let whole = replay_split(&ex, EXAMPLE_TWO, &[]);
        assert_eq!(whole.len(), 2);
        for at in 0..=EXAMPLE_TWO.len() {
            assert_eq!(replay_split(&ex, EXAMPLE_TWO, &[at]), whole, "split {at}");
        }
    }

    #[test]
    fn round_trip() {
        let out = SpatialExtractor::default().scan(EXAMPLE_TWO, 0, false);
        for s in &out.states {
            let again = SpatialExtractor::default().scan(&s.render(), 0, true);
            assert_eq!(again.states.last().unwrap().payload, s.payload);
        }
    }
}
