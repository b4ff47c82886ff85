use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::backend::{playback, SessionFactory};
use crate::monitor::{recheck, Binding};
use crate::taskgen::answer_region;
use crate::trace::ReasoningTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueMap {
    pub likely: f64,
    pub unlikely: f64,
    pub impossible: f64,
}

impl Default for ValueMap {
    fn default() -> Self {
        Self { likely: 1.0, unlikely: 0.1, impossible: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueCategory {
    Likely,
    Unlikely,
    Impossible,
}

impl ValueMap {
    pub fn score(&self, c: ValueCategory) -> f64 {
        match c {
            ValueCategory::Likely => self.likely,
            ValueCategory::Unlikely => self.unlikely,
            ValueCategory::Impossible => self.impossible,
        }
    }
}

/// The last category word in `text`.
pub fn parse_value_category(text: &str) -> Option<ValueCategory> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter_map(|w| match w.to_ascii_lowercase().as_str() {
            "likely" | "sure" => Some(ValueCategory::Likely),
            "unlikely" => Some(ValueCategory::Unlikely),
            "impossible" => Some(ValueCategory::Impossible),
            _ => None,
        })
        .next_back()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToTConfig {
    pub beam_width: usize,
    pub max_depth: usize,
    pub proposals_per_node: usize,
    pub value_map: ValueMap,
}

impl Default for ToTConfig {
    fn default() -> Self {
        Self { beam_width: 2, max_depth: 8, proposals_per_node: 2, value_map: ValueMap::default() }
    }
}

impl ToTConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.beam_width == 0 || self.max_depth == 0 || self.proposals_per_node == 0 {
            return Err(SearchError::Config("beam_width, max_depth and proposals_per_node must be positive".into()));
        }
        Ok(())
    }
}

pub struct Proposals {
    pub states: Vec<String>,
    pub tokens: u64,
}

/// Proposes candidate next states for a partial path.
pub trait Proposer {
    fn propose(&mut self, path: &[String], n: usize) -> Result<Proposals, SearchError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Valuation {
    pub score: f64,
    /// Breaks ties between equal scores; higher wins.
    pub tiebreak: u64,
    pub tokens: u64,
}

pub trait Valuer {
    fn value(&mut self, path: &[String], state: &str) -> Result<Valuation, SearchError>;
}

/// A state that ends the search: a line starting with `ANSWER:`.
pub fn is_terminal_state(state: &str) -> bool {
    terminal_answer(state).is_some()
}

pub fn terminal_answer(state: &str) -> Option<&str> {
    let t = state.trim_start();
    let head = t.get(..7)?;
    head.eq_ignore_ascii_case("ANSWER:").then(|| t[7..].trim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToTOutcome {
    pub path: Vec<String>,
    pub answer: Option<String>,
    pub score: f64,
    pub tokens: u64,
    /// Largest number of children scored at one depth.
    pub max_active: usize,
    pub max_depth_reached: usize,
    pub expansions: usize,
    pub terminal: bool,
}

#[derive(Clone)]
struct Node {
    path: Vec<String>,
    score: f64,
    tiebreak: u64,
    order: usize,
}

fn rank(nodes: &mut [Node]) {
    nodes.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then(b.tiebreak.cmp(&a.tiebreak)).then(a.order.cmp(&b.order))
    });
}

/// Beam search over proposed states. Children scored 0 are pruned; the best
/// terminal node wins, else the best node of the last frontier.
pub fn tot_search(
    proposer: &mut dyn Proposer,
    valuer: &mut dyn Valuer,
    config: &ToTConfig,
) -> Result<ToTOutcome, SearchError> {
    config.validate()?;
    let mut frontier = alloc::vec![Node { path: Vec::new(), score: 0.0, tiebreak: 0, order: 0 }];
    let mut finished: Vec<Node> = Vec::new();
    let mut out = ToTOutcome {
        path: Vec::new(),
        answer: None,
        score: 0.0,
        tokens: 0,
        max_active: 0,
        max_depth_reached: 0,
        expansions: 0,
        terminal: false,
    };
    let mut order = 0;
    let mut last_frontier: Vec<Node> = Vec::new();
    for depth in 1..=config.max_depth {
        let mut children = Vec::new();
        for node in &frontier {
            let props = proposer.propose(&node.path, config.proposals_per_node)?;
            out.tokens += props.tokens;
            out.expansions += 1;
            for state in props.states.into_iter().take(config.proposals_per_node) {
                let v = valuer.value(&node.path, &state)?;
                out.tokens += v.tokens;
                let mut path = node.path.clone();
                path.push(state);
                order += 1;
                children.push(Node { path, score: v.score, tiebreak: v.tiebreak, order });
            }
        }
        out.max_active = out.max_active.max(children.len());
        children.retain(|c| c.score > 0.0);
        if children.is_empty() {
            break;
        }
        out.max_depth_reached = depth;
        rank(&mut children);
        children.truncate(config.beam_width);
        let (done, open): (Vec<Node>, Vec<Node>) =
            children.into_iter().partition(|c| c.path.last().is_some_and(|s| is_terminal_state(s)));
        finished.extend(done);
        last_frontier = open.clone();
        frontier = open;
        if frontier.is_empty() {
            break;
        }
    }
    rank(&mut finished);
    rank(&mut last_frontier);
    let (best, terminal) = match (finished.first(), last_frontier.first()) {
        (Some(n), _) => (n.clone(), true),
        (None, Some(n)) => (n.clone(), false),
        (None, None) => return Err(SearchError::FrontierEmpty(out.max_depth_reached as u32 + 1)),
    };
    out.answer = best.path.last().and_then(|s| terminal_answer(s)).map(|s| s.to_string());
    out.score = best.score;
    out.path = best.path;
    out.terminal = terminal;
    Ok(out)
}

fn path_text(path: &[String]) -> String {
    if path.is_empty() {
        "(none yet)".to_string()
    } else {
        path.join("\n")
    }
}

/// Proposes by prompting a model with a template holding `{path}` and `{n}`.
pub struct LlmProposer<'a> {
    factory: &'a dyn SessionFactory,
    template: String,
    calls: u32,
}

impl<'a> LlmProposer<'a> {
    pub fn new(factory: &'a dyn SessionFactory, template: &str) -> Self {
        Self { factory, template: template.into(), calls: 0 }
    }
}

impl Proposer for LlmProposer<'_> {
    fn propose(&mut self, path: &[String], n: usize) -> Result<Proposals, SearchError> {
        let prompt = self.template.replace("{path}", &path_text(path)).replace("{n}", &format!("{n}"));
        let mut s = self.factory.open(&prompt, self.calls)?;
        self.calls += 1;
        let (text, tokens) = playback(&mut *s)?;
        let states = answer_region(&text)
            .lines()
            .map(|l| l.trim().trim_start_matches("- ").trim())
            .filter(|l| !l.is_empty())
            .take(n)
            .map(|l| l.to_string())
            .collect();
        Ok(Proposals { states, tokens })
    }
}

/// Values a state by asking a model for likely / unlikely / impossible.
pub struct LlmValuer<'a> {
    factory: &'a dyn SessionFactory,
    template: String,
    map: ValueMap,
    calls: u32,
}

impl<'a> LlmValuer<'a> {
    /// `template` may use `{path}` and `{state}`.
    pub fn new(factory: &'a dyn SessionFactory, template: &str, map: ValueMap) -> Self {
        Self { factory, template: template.into(), map, calls: 0 }
    }
}

impl Valuer for LlmValuer<'_> {
    fn value(&mut self, path: &[String], state: &str) -> Result<Valuation, SearchError> {
        let prompt = self.template.replace("{path}", &path_text(path)).replace("{state}", state);
        let mut s = self.factory.open(&prompt, self.calls)?;
        self.calls += 1;
        let (text, tokens) = playback(&mut *s)?;
        let cat = parse_value_category(answer_region(&text)).unwrap_or(ValueCategory::Unlikely);
        Ok(Valuation { score: self.map.score(cat), tiebreak: 0, tokens })
    }
}

/// Values a state with step verifiers: 1 when every state extracted from the
/// path plus the candidate passes, else 0. Ties go to the candidate whose
/// path yields more checked states.
pub struct StepVerifierValuer {
    bindings: Box<dyn Fn() -> Vec<Binding>>,
}

impl StepVerifierValuer {
    pub fn new(bindings: impl Fn() -> Vec<Binding> + 'static) -> Self {
        Self { bindings: Box::new(bindings) }
    }
}

impl Valuer for StepVerifierValuer {
    fn value(&mut self, path: &[String], state: &str) -> Result<Valuation, SearchError> {
        if is_terminal_state(state) {
            return Ok(Valuation { score: 1.0, tiebreak: 0, tokens: 0 });
        }
        let mut text = String::new();
        for s in path.iter().map(String::as_str).chain([state]) {
            text.push_str(s);
            text.push('\n');
        }
        let mut trace = ReasoningTrace::new("");
        trace.push_model(&text, 0);
        let mut b = (self.bindings)();
        let report = recheck(&trace, &mut b).map_err(|e| SearchError::Critic(e.to_string()))?;
        let score = if report.sound() && report.checked > 0 { 1.0 } else { 0.0 };
        Ok(Valuation { score, tiebreak: report.checked as u64, tokens: 0 })
    }
}
