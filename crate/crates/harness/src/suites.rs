//! Mock suites with known accuracy/token trade-offs, for sweeps, soundness
//! checks and the shipped fixtures.
//!
//! Every suite routes each instance's prompt to its own scripted trace, so a
//! suite is an instance list plus one [`MockScript`].

use anyhow::{bail, Context, Result};

use tracewarden_core::backend::{MockNode, MockScript, ProbeEntry, TopLogprob};
use tracewarden_core::game24::verify_game24;
use tracewarden_core::stopping::DEFAULT_DEER_SUFFIX;
use tracewarden_core::taskgen::{
    gen_game24_instance, gen_spatial_instance, Gold, PromptStyle, QuestionKind, TaskInstance, TemplateSet, LABELS,
};

#[derive(Debug, Clone)]
pub struct Suite {
    pub instances: Vec<TaskInstance>,
    pub script: MockScript,
}

fn gold_label(inst: &TaskInstance) -> Result<String> {
    match &inst.gold {
        Gold::Label { label } => Ok(label.clone()),
        _ => bail!("{} has no option label", inst.id),
    }
}

fn other_label(gold: &str, i: usize) -> String {
    let others: Vec<&str> = LABELS.iter().copied().filter(|l| *l != gold).collect();
    others[i % others.len()].to_string()
}

fn mcq_instances(n: usize, seed: u64) -> Result<Vec<TaskInstance>> {
    (0..n as u64).map(|i| Ok(gen_spatial_instance(seed + i, 5, QuestionKind::Q0)?)).collect()
}

fn route_all(mut script: MockScript, inst: &TaskInstance, style: PromptStyle, root: &str) -> Result<MockScript> {
    let prompt = TemplateSet::builtin().render(inst, style).context("rendering prompt")?;
    script = script.route(&prompt, &[root]);
    Ok(script)
}

fn empty_script() -> MockScript {
    let mut s = MockScript::new(&[]);
    s.model = "mock-suite".into();
    s
}

const FILLER: &str = "Let me re-read every relation in the map and make sure each one was used correctly before I commit to anything else here.";

/// Answer sequences for k-stable: each instance first proposes a wrong label,
/// then settles on the gold one. A `late` instance repeats the wrong label
/// once more before settling, so k=2 stops on the wrong answer there.
///
/// Stopping indices per instance: early `[W, G, G, G]`, late `[W, W, G, G, G]`.
/// With no late instances k=2 is the cheapest value that keeps accuracy; with
/// any late instance it is k=3.
pub fn kstable_suite(n: usize, late_every: Option<usize>, seed: u64) -> Result<Suite> {
    let instances = mcq_instances(n, seed)?;
    let mut script = empty_script();
    for (i, inst) in instances.iter().enumerate() {
        let g = gold_label(inst)?;
        let w = other_label(&g, i);
        let late = late_every.is_some_and(|m| m > 0 && i % m == m - 1);
        let mut beliefs = vec![w.clone()];
        if late {
            beliefs.push(w.clone());
        }
        beliefs.extend([g.clone(), g.clone(), g.clone()]);
        let id = &inst.id;
        let count = beliefs.len();
        for (j, b) in beliefs.iter().enumerate() {
            let text = format!("Step {j}. {FILLER}\nSo the answer is {b}.\n");
            let mut node = MockNode::from_text(&text).with_tail(&format!("\nAnswer: {b}"));
            node = node.with_next(&format!("{id}/{}", j + 1));
            script = script.node(&format!("{id}/{j}"), node);
        }
        let end = format!("{FILLER} {FILLER}\nI am confident now.\n</think>\nAnswer: {g}");
        script = script.node(&format!("{id}/{count}"), MockNode::from_text(&end).with_tail(&format!("\nAnswer: {g}")));
        script = route_all(script, inst, PromptStyle::Plain, &format!("{id}/0"))?;
    }
    Ok(Suite { instances, script })
}

fn ln(p: f64) -> f64 {
    p.ln()
}

fn two_point(top: &str, p: f64) -> Vec<TopLogprob> {
    vec![TopLogprob::new(top, ln(p)), TopLogprob::new("Hmm", ln(1.0 - p))]
}

/// Per-chunk (belief is gold, EAT top-token probability, DEER answer probability).
const CHUNKS: [(bool, f64, f64); 5] =
    [(false, 0.5, 0.5), (false, 0.97, 0.88), (true, 0.99, 0.91), (true, 0.999, 0.96), (true, 0.9999, 0.999)];

/// Blank-line-separated chunks whose probes grow more confident. Beliefs are
/// wrong for the first two chunks. Run with `alpha = 1`, the EAT optimum over
/// the standard grid is 0.1 and the DEER optimum is 0.9.
///
/// Chunk entropies (two-point distributions): 0.693, 0.135, 0.056, 0.0079,
/// 0.00102. Chunk DEER confidences: 0.5, 0.88, 0.91, 0.96, 0.999.
pub fn confidence_suite(n: usize, seed: u64) -> Result<Suite> {
    let instances = mcq_instances(n, seed)?;
    let mut script = empty_script();
    for (i, inst) in instances.iter().enumerate() {
        let g = gold_label(inst)?;
        let w = other_label(&g, i);
        let id = &inst.id;
        // A boundary is only seen once the next node's first byte arrives, so
        // a stop lands in node j+1 and its tail answers with chunk j's belief.
        let mut prev = w.clone();
        for (j, (right, eat_p, deer_p)) in CHUNKS.iter().enumerate() {
            let b = if *right { &g } else { &w };
            let marker = format!("[{id} chunk {j}]");
            let text = format!("{FILLER} For now I lean to {b}. {marker}\n\n");
            let tok = format!(" {b}");
            let mut node = MockNode::from_text(&text)
                .with_tail(&format!("\nAnswer: {prev}"))
                .with_probe(ProbeEntry {
                    at_byte: None,
                    after: Some(marker.clone()),
                    suffix: Some("</think>".into()),
                    dist: two_point(b, *eat_p),
                })
                .with_probe(ProbeEntry {
                    at_byte: None,
                    after: Some(marker.clone()),
                    suffix: Some(DEFAULT_DEER_SUFFIX.into()),
                    dist: two_point(&tok, *deer_p),
                })
                .with_probe(ProbeEntry {
                    at_byte: None,
                    after: Some(marker.clone()),
                    suffix: Some(format!("{DEFAULT_DEER_SUFFIX}{tok}")),
                    dist: vec![TopLogprob::new(".", 0.0)],
                });
            node = node.with_next(&format!("{id}/{}", j + 1));
            script = script.node(&format!("{id}/{j}"), node);
            prev = b.clone();
        }
        let end = format!("{FILLER}\n</think>\nAnswer: {g}");
        script = script.node(&format!("{id}/{}", CHUNKS.len()), MockNode::from_text(&end).with_tail(&format!("\nAnswer: {prev}")));
        script = route_all(script, inst, PromptStyle::Plain, &format!("{id}/0"))?;
    }
    Ok(Suite { instances, script })
}

/// An expression over `numbers` in the input order that does not make 24.
pub fn wrong_expression(numbers: [u64; 4]) -> String {
    let n = numbers;
    ["+", "*", "-"]
        .iter()
        .map(|op| format!("{} {op} {} {op} {} {op} {}", n[0], n[1], n[2], n[3]))
        .chain(std::iter::once(format!("({} - {}) * {} - {}", n[0], n[1], n[2], n[3])))
        .find(|e| !verify_game24(e, &n).pass)
        .expect("some chain misses 24")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Game24Case {
    /// States only valid equations.
    Clean,
    /// States a wrong equation, then fixes it after feedback.
    Fixable,
    /// Repeats wrong equations after every feedback.
    Stubborn,
}

impl Game24Case {
    pub fn of(i: usize) -> Self {
        match i % 5 {
            0 | 3 => Game24Case::Clean,
            4 => Game24Case::Stubborn,
            _ => Game24Case::Fixable,
        }
    }
}

/// Step-verifier suite over solvable Game-of-24 instances; case `i` is
/// [`Game24Case::of`]. Unmonitored, fixable and stubborn traces answer with the
/// wrong equation.
pub fn game24_suite(n: usize, seed: u64) -> Result<Suite> {
    let mut instances = Vec::with_capacity(n);
    let mut script = empty_script();
    for i in 0..n {
        let inst = gen_game24_instance(seed + i as u64, true)?;
        let nums = inst.numbers().context("game24 numbers")?;
        let Gold::Game24 { witness: Some(good), .. } = &inst.gold else { bail!("{} has no witness", inst.id) };
        let bad = wrong_expression(nums);
        let id = &inst.id;
        let root = format!("{id}/0");
        match Game24Case::of(i) {
            Game24Case::Clean => {
                let t = format!("Let me combine the numbers.\n{good} = 24\nThat uses each number once.\n</think>\n{good} = 24");
                script = script.node(&root, MockNode::from_text(&t));
            }
            Game24Case::Fixable | Game24Case::Stubborn => {
                let stubborn = Game24Case::of(i) == Game24Case::Stubborn;
                let t = format!("Let me combine the numbers.\n{bad} = 24\nThat uses each number once.\n");
                let retry = if stubborn { format!("{id}/stuck") } else { format!("{id}/fixed") };
                script = script.node(
                    &root,
                    MockNode::from_text(&t).with_branch("*", &retry).with_next(&format!("{id}/wrong-end")),
                );
                script = script.node(&format!("{id}/wrong-end"), MockNode::from_text(&format!("</think>\n{bad} = 24")));
                let fixed = format!("I see the slip. Trying again.\n{good} = 24\nThat is correct.\n</think>\n{good} = 24");
                script = script.node(&format!("{id}/fixed"), MockNode::from_text(&fixed));
                let stuck = format!("Hmm, what about this.\n{bad} = 24\n");
                script = script.node(
                    &format!("{id}/stuck"),
                    MockNode::from_text(&stuck).with_branch("*", &format!("{id}/stuck")).with_next(&format!("{id}/wrong-end")),
                );
            }
        }
        for style in [PromptStyle::Plain, PromptStyle::Stepwise] {
            script = route_all(script, &inst, style, &root)?;
        }
        instances.push(inst);
    }
    Ok(Suite { instances, script })
}
