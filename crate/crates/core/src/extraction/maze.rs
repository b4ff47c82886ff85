use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    find_ci, lines_from, marker_header, starts_with_ci, strip_decoration, ExtractedState, Extractor, Line, Payload,
    ScanOutput, StateKind,
};
use crate::maze::{Direction, MazeStepPayload, Pos, RunningCounts, TurnType};
use crate::verdict::Span;

/// `>>> STEP n: Move ...` and `>>> LOCATE START AND EXIT` blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeExtractor {}

/// Reads `(r,c)`, tolerating spaces and a trailing period.
pub fn parse_pos(s: &str) -> Option<Pos> {
    let s = s.trim().trim_end_matches('.').trim();
    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
    let (r, c) = inner.split_once(',')?;
    Some(Pos::new(r.trim().parse().ok()?, c.trim().parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Step,
    Locate,
    Other,
}

fn classify(header: &str) -> Block {
    if starts_with_ci(header, "locate") {
        return Block::Locate;
    }
    if let Some(rest) = strip_step_number(header) {
        if starts_with_ci(rest.1, "move") {
            return Block::Step;
        }
    }
    Block::Other
}

/// Splits `STEP n: rest` into `(n, rest)`; `n` is `None` when not numeric.
fn strip_step_number(header: &str) -> Option<(Option<u32>, &str)> {
    if !starts_with_ci(header, "step") {
        return None;
    }
    let rest = header[4..].trim_start();
    let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    let n = rest[..digits].parse().ok();
    let rest = rest[digits..].trim_start();
    let rest = rest.strip_prefix(':').unwrap_or(rest).trim_start();
    Some((n, rest))
}

fn parse_header(header: &str) -> Result<(u32, Direction, Pos, Pos), String> {
    let expected = "expected `>>> STEP n: Move <UP|DOWN|LEFT|RIGHT> from (r,c) to (r,c)`";
    let (n, rest) = strip_step_number(header).ok_or_else(|| format!("unreadable step header; {expected}"))?;
    let index = match n {
        Some(n) if n >= 1 => n,
        _ => return Err(format!("step number must be a positive integer; {expected}")),
    };
    let body = rest[4..].trim_start();
    let from_at = find_ci(body, " from ", 0).ok_or_else(|| format!("STEP {index}: missing `from`; {expected}"))?;
    let to_at = find_ci(body, " to ", from_at).ok_or_else(|| format!("STEP {index}: missing `to`; {expected}"))?;
    let dir: Direction = body[..from_at]
        .trim()
        .parse()
        .map_err(|_| format!("STEP {index}: unknown direction {:?}; {expected}", body[..from_at].trim()))?;
    let from_txt = &body[from_at + 6..to_at];
    let to_txt = &body[to_at + 4..];
    let from = parse_pos(from_txt)
        .ok_or_else(|| format!("STEP {index}: malformed coordinates {:?}; {expected}", from_txt.trim()))?;
    let to = parse_pos(to_txt).ok_or_else(|| format!("STEP {index}: malformed coordinates {:?}; {expected}", to_txt.trim()))?;
    Ok((index, dir, from, to))
}

fn field(line: &str) -> Option<(String, &str)> {
    let s = strip_decoration(line);
    let (k, v) = s.split_once(':')?;
    let key: String = k.trim().trim_matches('*').trim().to_ascii_lowercase();
    Some((key, v.trim().trim_matches('*').trim()))
}

fn parse_counts(v: &str) -> Result<RunningCounts, String> {
    let mut counts = RunningCounts::default();
    for part in v.split([',', ';']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((k, n)) = part.split_once(['=', ':']) else {
            return Err(format!("malformed running count {v:?}; expected `Right=n, Left=n[, Total=n]`"));
        };
        let n: u32 = n
            .trim()
            .trim_end_matches('.')
            .parse()
            .map_err(|_| format!("malformed running count {v:?}; expected `Right=n, Left=n[, Total=n]`"))?;
        match k.trim().to_ascii_lowercase().as_str() {
            "right" => counts.right = Some(n),
            "left" => counts.left = Some(n),
            "total" => counts.total = Some(n),
            _ => {}
        }
    }
    Ok(counts)
}

fn parse_direction_value(v: &str) -> Result<Option<Direction>, String> {
    let v = v.trim().trim_end_matches('.');
    if v.is_empty() || matches!(v.to_ascii_lowercase().as_str(), "none" | "n/a" | "-" | "—") {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| format!("unknown direction {v:?}"))
}

fn apply_step_field(step: &mut MazeStepPayload, key: &str, v: &str) -> Result<bool, String> {
    match key {
        "current position" => {
            step.current_position =
                Some(parse_pos(v).ok_or_else(|| format!("STEP {}: malformed current position {v:?}", step.index))?)
        }
        "previous direction" => step.previous_direction = Some(parse_direction_value(v)?),
        "current direction" => {
            step.current_direction =
                Some(parse_direction_value(v)?.ok_or_else(|| format!("STEP {}: current direction missing", step.index))?)
        }
        "turn type" => {
            step.claimed_turn = Some(
                v.trim_end_matches('.')
                    .parse::<TurnType>()
                    .map_err(|_| format!("STEP {}: unknown turn type {v:?}", step.index))?,
            )
        }
        "running count" | "running counts" => {
            step.running_counts = Some(parse_counts(v)?);
            return Ok(true);
        }
        _ => {}
    }
    Ok(false)
}

/// End of a block body starting after `header`, or `None` while incomplete.
fn block_end<'a>(
    text: &'a str,
    header: &Line<'a>,
    flush: bool,
    mut on_line: impl FnMut(&str) -> bool,
) -> Option<usize> {
    for line in lines_from(text, header.next) {
        if marker_header(line.text).is_some() {
            return Some(line.start);
        }
        if !line.terminated(flush) {
            return None;
        }
        if on_line(line.text) {
            return Some(line.next);
        }
    }
    flush.then_some(text.len())
}

impl MazeExtractor {
    fn step_block(text: &str, header: &Line<'_>, h: &str, flush: bool) -> Option<ExtractedState> {
        let parsed = parse_header(h);
        let mut step = parsed.as_ref().ok().map(|&(index, move_dir, from_pos, to_pos)| MazeStepPayload {
            index,
            move_dir,
            from_pos,
            to_pos,
            current_position: None,
            previous_direction: None,
            current_direction: None,
            claimed_turn: None,
            running_counts: None,
        });
        let mut error = parsed.err();
        let end = block_end(text, header, flush, |l| {
            let Some((k, v)) = field(l) else { return false };
            match step.as_mut().map(|s| apply_step_field(s, &k, v)) {
                Some(Ok(done)) => done,
                Some(Err(e)) => {
                    error.get_or_insert(e);
                    k.starts_with("running count")
                }
                None => k.starts_with("running count"),
            }
        })?;
        let span = Span::new(header.start, end);
        let payload = match (error, step) {
            (None, Some(step)) => Payload::MazeStep(step),
            (reason, _) => Payload::Malformed { reason: reason.unwrap_or_else(|| String::from("unreadable step block")) },
        };
        Some(ExtractedState::new(StateKind::MazeStep, payload, span))
    }

    fn locate_block(text: &str, header: &Line<'_>, flush: bool) -> Option<ExtractedState> {
        let (mut s, mut e) = (None, None);
        let mut error = None;
        let end = block_end(text, header, flush, |l| {
            let Some((k, v)) = field(l) else { return false };
            let slot = match k.as_str() {
                "s position" | "start position" | "s" => &mut s,
                "e position" | "exit position" | "end position" | "e" => &mut e,
                _ => return false,
            };
            match parse_pos(v) {
                Some(p) => *slot = Some(p),
                None => {
                    error.get_or_insert(format!("malformed coordinates {v:?} in LOCATE block; expected (r,c)"));
                }
            }
            s.is_some() && e.is_some()
        })?;
        let payload = match error {
            None => Payload::MazeLocate { s, e },
            Some(reason) => Payload::Malformed { reason },
        };
        Some(ExtractedState::new(StateKind::MazeLocate, payload, Span::new(header.start, end)))
    }
}

impl Extractor for MazeExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> ScanOutput {
        let mut states = Vec::new();
        let mut at = cursor;
        'outer: loop {
            for line in lines_from(text, at) {
                if !line.terminated(flush) {
                    break 'outer;
                }
                let Some(h) = marker_header(line.text) else {
                    at = line.next;
                    continue;
                };
                let state = match classify(h) {
                    Block::Step => Self::step_block(text, &line, h, flush),
                    Block::Locate => Self::locate_block(text, &line, flush),
                    Block::Other => {
                        at = line.next;
                        continue;
                    }
                };
                match state {
                    Some(s) => {
                        at = s.span.end;
                        states.push(s);
                        continue 'outer;
                    }
                    None => break 'outer,
                }
            }
            break;
        }
        ScanOutput { states, cursor: at }
    }
}
