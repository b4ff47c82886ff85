//! Deterministic scripted backend.
//!
//! A script is a graph of nodes. Each node streams its tokens, then follows
//! `next` or stops. After an injection the session jumps to the child keyed
//! by the injected text: the longest branch key that prefixes it (also tried
//! with a feedback prefix such as "Wait, " removed), `"*"` as a catch-all, or
//! `"END_THINK"` for an end-of-thinking injection. Without an `END_THINK`
//! branch, an end-of-thinking injection plays `final_answer_tail`. Nodes on
//! the playback path are searched most recent first.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BackendError, GenerationParams, GenerationSession, SessionDescriptor, SessionFactory, TokenEvent, TopLogprob};
use crate::trace::{Origin, ReasoningTrace, END_THINK};

pub const END_THINK_KEY: &str = "END_THINK";
pub const CATCH_ALL_KEY: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockToken {
    Text(String),
    Rich { text: String, top_logprobs: Vec<TopLogprob> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailSpec {
    /// Split into word tokens.
    Text(String),
    Tokens(Vec<MockToken>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    /// Matches when the probe context has exactly this byte length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_byte: Option<usize>,
    /// Matches when the probe context ends with this text (trailing whitespace ignored).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    /// Matches when the forced suffix equals this text (surrounding whitespace ignored).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    pub dist: Vec<TopLogprob>,
}

impl ProbeEntry {
    fn matches(&self, context: &str, suffix: &str) -> bool {
        self.at_byte.is_none_or(|n| n == context.len())
            && self.after.as_deref().is_none_or(|a| context.trim_end().ends_with(a.trim_end()))
            && self.suffix.as_deref().is_none_or(|s| s.trim() == suffix.trim())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockNode {
    pub tokens: Vec<MockToken>,
    /// Convenience: appended after `tokens`, split into word tokens.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub branches: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_answer_tail: Option<TailSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRoute {
    pub contains: String,
    /// Root per sample index, cycled.
    pub roots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub model: String,
    /// Default roots per sample index, cycled.
    #[serde(default)]
    pub roots: Vec<String>,
    #[serde(default)]
    pub prompt_routes: Vec<PromptRoute>,
    pub nodes: BTreeMap<String, MockNode>,
    #[serde(default = "default_prefixes")]
    pub feedback_prefixes: Vec<String>,
}

fn default_prefixes() -> Vec<String> {
    alloc::vec![String::from("Wait, "), String::from("#Thought: ")]
}

/// Splits text into tokens of leading whitespace plus one non-whitespace run.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    for c in text.chars() {
        if c.is_whitespace() && in_word {
            out.push(core::mem::take(&mut cur));
            in_word = false;
        }
        if !c.is_whitespace() {
            in_word = true;
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn events_of(tokens: &[MockToken]) -> impl Iterator<Item = TokenEvent> + '_ {
    tokens.iter().map(|t| match t {
        MockToken::Text(s) => TokenEvent::text(s.clone()),
        MockToken::Rich { text, top_logprobs } => {
            TokenEvent { text: text.clone(), top_logprobs: Some(top_logprobs.clone()), continuation: false }.normalized()
        }
    })
}

fn tail_events(tail: &TailSpec) -> Vec<TokenEvent> {
    match tail {
        TailSpec::Text(s) => word_tokens(s).into_iter().map(TokenEvent::text).collect(),
        TailSpec::Tokens(t) => events_of(t).collect(),
    }
}

impl MockNode {
    /// A node streaming `text` as word tokens.
    pub fn from_text(text: &str) -> Self {
        Self { text: Some(text.into()), ..Self::default() }
    }

    pub fn events(&self) -> Vec<TokenEvent> {
        let mut ev: Vec<TokenEvent> = events_of(&self.tokens).collect();
        if let Some(t) = &self.text {
            ev.extend(word_tokens(t).into_iter().map(TokenEvent::text));
        }
        ev
    }

    pub fn with_next(mut self, next: &str) -> Self {
        self.next = Some(next.into());
        self
    }

    pub fn with_branch(mut self, key: &str, node: &str) -> Self {
        self.branches.insert(key.into(), node.into());
        self
    }

    pub fn with_tail(mut self, tail: &str) -> Self {
        self.final_answer_tail = Some(TailSpec::Text(tail.into()));
        self
    }

    pub fn with_probe(mut self, probe: ProbeEntry) -> Self {
        self.probes.push(probe);
        self
    }
}

impl MockScript {
    pub fn new(roots: &[&str]) -> Self {
        Self {
            model: String::new(),
            roots: roots.iter().map(|r| String::from(*r)).collect(),
            prompt_routes: Vec::new(),
            nodes: BTreeMap::new(),
            feedback_prefixes: default_prefixes(),
        }
    }

    pub fn node(mut self, id: &str, node: MockNode) -> Self {
        self.nodes.insert(id.into(), node);
        self
    }

    pub fn route(mut self, contains: &str, roots: &[&str]) -> Self {
        self.prompt_routes
            .push(PromptRoute { contains: contains.into(), roots: roots.iter().map(|r| String::from(*r)).collect() });
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let missing = |id: &str, from: &str| {
            BackendError::Configuration(format!("mock script references unknown node {id:?} from {from}"))
        };
        if self.roots.is_empty() && self.prompt_routes.is_empty() {
            return Err(BackendError::Configuration("mock script has no roots".into()));
        }
        for r in self.roots.iter().chain(self.prompt_routes.iter().flat_map(|p| p.roots.iter())) {
            if !self.nodes.contains_key(r) {
                return Err(missing(r, "roots"));
            }
        }
        for (id, n) in &self.nodes {
            for child in n.branches.values().chain(n.next.iter()) {
                if !self.nodes.contains_key(child) {
                    return Err(missing(child, id));
                }
            }
        }
        Ok(())
    }

    pub fn has_probes(&self) -> bool {
        self.nodes.values().any(|n| !n.probes.is_empty())
    }

    fn root_for(&self, prompt: &str, sample: u32) -> Option<&str> {
        let roots = self
            .prompt_routes
            .iter()
            .find(|r| prompt.contains(r.contains.as_str()))
            .map_or(&self.roots, |r| &r.roots);
        if roots.is_empty() {
            return None;
        }
        Some(roots[sample as usize % roots.len()].as_str())
    }

    fn key_matches(&self, key: &str, injected: &str) -> bool {
        injected.starts_with(key)
            || self.feedback_prefixes.iter().any(|p| injected.strip_prefix(p.as_str()).is_some_and(|r| r.starts_with(key)))
    }
}

struct Compiled {
    script: MockScript,
    events: BTreeMap<String, Vec<TokenEvent>>,
}

/// Opens [`MockSession`]s over a shared, validated script.
#[derive(Clone)]
pub struct MockFactory {
    inner: Arc<Compiled>,
    params: GenerationParams,
}

impl MockFactory {
    pub fn new(script: MockScript, params: GenerationParams) -> Result<Self, BackendError> {
        script.validate()?;
        params.validate()?;
        let events = script.nodes.iter().map(|(id, n)| (id.clone(), n.events())).collect();
        Ok(Self { inner: Arc::new(Compiled { script, events }), params })
    }

    pub fn script(&self) -> &MockScript {
        &self.inner.script
    }

    pub fn open_mock(&self, prompt: &str, sample: u32) -> Result<MockSession, BackendError> {
        let root = self
            .inner
            .script
            .root_for(prompt, sample)
            .ok_or_else(|| BackendError::Configuration("no mock root matches the prompt".into()))?;
        let model = if self.inner.script.model.is_empty() { "mock" } else { self.inner.script.model.as_str() };
        Ok(MockSession {
            inner: self.inner.clone(),
            prompt: prompt.into(),
            descriptor: SessionDescriptor { backend: "mock".into(), model: model.into(), params: self.params },
            path: alloc::vec![String::from(root)],
            tail: None,
            pos: 0,
            stopped: false,
            injections_seen: 0,
        })
    }
}

impl SessionFactory for MockFactory {
    fn open(&self, prompt: &str, sample: u32) -> Result<Box<dyn GenerationSession>, BackendError> {
        Ok(Box::new(self.open_mock(prompt, sample)?))
    }
}

pub struct MockSession {
    inner: Arc<Compiled>,
    prompt: String,
    descriptor: SessionDescriptor,
    /// Nodes visited, most recent last.
    path: Vec<String>,
    tail: Option<Vec<TokenEvent>>,
    pos: usize,
    stopped: bool,
    injections_seen: usize,
}

impl MockSession {
    fn script(&self) -> &MockScript {
        &self.inner.script
    }

    fn jump(&mut self, node: String) {
        self.path.push(node);
        self.tail = None;
        self.pos = 0;
    }

    fn follow_injection(&mut self, injected: &str) -> Result<(), BackendError> {
        let script = &self.inner.script;
        let nodes: Vec<&MockNode> = self.path.iter().rev().map(|id| &script.nodes[id]).collect();
        if injected.starts_with(END_THINK) {
            for n in &nodes {
                if let Some(child) = n.branches.get(END_THINK_KEY) {
                    let child = child.clone();
                    self.jump(child);
                    return Ok(());
                }
                if let Some(t) = &n.final_answer_tail {
                    self.tail = Some(tail_events(t));
                    self.pos = 0;
                    return Ok(());
                }
            }
            return Err(BackendError::ScriptGap(format!("no END_THINK branch or final_answer_tail on {:?}", self.path)));
        }
        for n in &nodes {
            let best = n
                .branches
                .iter()
                .filter(|(k, _)| k.as_str() != END_THINK_KEY && k.as_str() != CATCH_ALL_KEY)
                .filter(|(k, _)| script.key_matches(k, injected))
                .max_by_key(|(k, _)| k.len())
                .or_else(|| n.branches.get_key_value(CATCH_ALL_KEY));
            if let Some((_, child)) = best {
                let child = child.clone();
                self.jump(child);
                return Ok(());
            }
        }
        Err(BackendError::ScriptGap(format!("unexpected injection {injected:?} after nodes {:?}", self.path)))
    }
}

impl GenerationSession for MockSession {
    fn descriptor(&self) -> &SessionDescriptor {
        &self.descriptor
    }

    fn next_event(&mut self) -> Result<Option<TokenEvent>, BackendError> {
        if self.stopped {
            return Ok(None);
        }
        loop {
            let events = match &self.tail {
                Some(t) => t,
                None => &self.inner.events[self.path.last().expect("path is never empty")],
            };
            if let Some(ev) = events.get(self.pos) {
                self.pos += 1;
                return Ok(Some(ev.clone()));
            }
            if self.tail.is_some() {
                self.stopped = true;
                return Ok(None);
            }
            let current = &self.script().nodes[self.path.last().expect("path is never empty")];
            match current.next.clone() {
                Some(next) => self.jump(next),
                None => {
                    self.stopped = true;
                    return Ok(None);
                }
            }
        }
    }

    fn continue_from(&mut self, trace: &ReasoningTrace) -> Result<(), BackendError> {
        if trace.prompt() != self.prompt {
            return Err(BackendError::Contract("continuation trace has a different prompt".into()));
        }
        let seen = trace.intervention_count();
        if seen > self.injections_seen {
            self.injections_seen = seen;
            let injected = trace
                .segments()
                .iter()
                .rev()
                .find(|s| s.origin == Origin::Intervention)
                .map(|s| s.text.clone())
                .unwrap_or_default();
            self.follow_injection(&injected)?;
        }
        // without a new injection this is a plain resume after cancel
        self.stopped = false;
        Ok(())
    }

    fn cancel(&mut self) {
        self.stopped = true;
    }

    fn close(&mut self) {
        self.stopped = true;
    }

    fn probe_next_distribution(&mut self, context: &str, suffix: &str) -> Result<Vec<TopLogprob>, BackendError> {
        let script = self.script();
        if !script.has_probes() {
            return Err(BackendError::Capability("mock script has no probe tables".into()));
        }
        for id in self.path.iter().rev() {
            if let Some(e) = script.nodes[id].probes.iter().find(|e| e.matches(context, suffix)) {
                let mut d = e.dist.clone();
                d.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
                return Ok(d);
            }
        }
        Ok(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::playback;
    use crate::trace::{apply_intervention, InsertAt, InterventionAction};
    use crate::verdict::Span;
    use alloc::vec;

    fn script() -> MockScript {
        MockScript::new(&["root"])
            .node(
                "root",
                MockNode::from_text("step one\nstep two\n")
                    .with_branch("bad step", "fixed")
                    .with_tail(" B.")
                    .with_next("more"),
            )
            .node("more", MockNode::from_text("step three\n"))
            .node("fixed", MockNode::from_text("corrected\n"))
    }

    #[test]
    fn word_tokens_keep_all_bytes() {
        let t = word_tokens("a b\n\nc ");
        assert_eq!(t, vec!["a", " b", "\n\nc", " "]);
        assert_eq!(t.concat(), "a b\n\nc ");
    }

    #[test]
    fn default_chain_playback() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        let (text, tokens) = playback(&mut *s).unwrap();
        assert_eq!(text, "step one\nstep two\nstep three\n");
        assert_eq!(tokens, 8);
        assert_eq!(s.descriptor().params, GenerationParams::qwen());
    }

    #[test]
    fn branch_on_feedback() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        let mut trace = ReasoningTrace::new("p");
        for _ in 0..2 {
            let ev = s.next_event().unwrap().unwrap();
            trace.push_model(&ev.text, 1);
        }
        let a = InterventionAction::inject_text("bad step, redo", InsertAt::AtTail);
        apply_intervention(&mut trace, &a, Span::default(), &Default::default()).unwrap();
        s.continue_from(&trace).unwrap();
        let (text, _) = playback(&mut *s).unwrap();
        assert_eq!(text, "corrected\n");
    }

    #[test]
    fn end_think_plays_tail() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        let mut trace = ReasoningTrace::new("p");
        let ev = s.next_event().unwrap().unwrap();
        trace.push_model(&ev.text, 1);
        apply_intervention(&mut trace, &InterventionAction::end_think(InsertAt::AtTail), Span::default(), &Default::default())
            .unwrap();
        s.continue_from(&trace).unwrap();
        assert_eq!(playback(&mut *s).unwrap().0, " B.");
    }

    #[test]
    fn unknown_injection_is_a_script_gap() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        let mut trace = ReasoningTrace::new("p");
        apply_intervention(&mut trace, &InterventionAction::inject_text("other", InsertAt::AtTail), Span::default(), &Default::default())
            .unwrap();
        assert!(matches!(s.continue_from(&trace), Err(BackendError::ScriptGap(_))));
    }

    #[test]
    fn cancel_then_resume() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        s.next_event().unwrap();
        s.cancel();
        assert_eq!(s.next_event().unwrap(), None);
        let mut trace = ReasoningTrace::new("p");
        trace.push_model("step", 1);
        s.continue_from(&trace).unwrap();
        assert_eq!(s.next_event().unwrap().unwrap().text, " one");
    }

    #[test]
    fn probes_need_tables() {
        let f = MockFactory::new(script(), GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        assert!(matches!(s.probe_next_distribution("", "</think>"), Err(BackendError::Capability(_))));

        let probe = ProbeEntry {
            at_byte: None,
            after: None,
            suffix: Some("</think> The answer is".into()),
            dist: vec![TopLogprob::new("B", libm::log(0.03)), TopLogprob::new("A", libm::log(0.97))],
        };
        let mut sc = script();
        sc.nodes.get_mut("root").unwrap().probes.push(probe);
        let f = MockFactory::new(sc, GenerationParams::qwen()).unwrap();
        let mut s = f.open("p", 0).unwrap();
        let d = s.probe_next_distribution("step one", "</think> The answer is").unwrap();
        assert_eq!(d[0].token, "A");
        assert!(s.probe_next_distribution("step one", "other").unwrap().is_empty());
        // probing does not disturb the stream
        assert_eq!(playback(&mut s).unwrap().0, "step one\nstep two\nstep three\n");
    }

    #[test]
    fn routes_and_samples() {
        let sc = script().route("instance-7", &["fixed", "more"]);
        let f = MockFactory::new(sc, GenerationParams::qwen()).unwrap();
        assert_eq!(playback(&mut *f.open("q instance-7", 0).unwrap()).unwrap().0, "corrected\n");
        assert_eq!(playback(&mut *f.open("q instance-7", 1).unwrap()).unwrap().0, "step three\n");
        assert_eq!(playback(&mut *f.open("q instance-7", 2).unwrap()).unwrap().0, "corrected\n");
    }

    #[test]
    fn script_json_round_trip() {
        let json = r#"{
            "roots": ["a"],
            "nodes": {
                "a": {"tokens": ["x", {"text": "y", "top_logprobs": [{"token": "y", "logprob": -0.1}]}],
                      "final_answer_tail": ["\\boxed{A}"],
                      "branches": {"END_THINK": "b"}},
                "b": {"text": "done"}
            }
        }"#;
        let sc: MockScript = serde_json::from_str(json).unwrap();
        sc.validate().unwrap();
        let back: MockScript = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
        assert!(matches!(back.nodes["a"].final_answer_tail, Some(TailSpec::Tokens(_))));
    }
}
