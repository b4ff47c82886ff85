//! Named methods: how an instance is prompted, monitored or searched, and
//! turned into a [`RunRecord`].

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{playback, SessionFactory};
use crate::extraction::{AnswerExtractor, ChunkExtractor, EquationExtractor, MazeExtractor, SpatialExtractor};
use crate::maze::parse_maze;
use crate::metrics::{InterventionRecord, RunRecord};
use crate::monitor::{
    recheck, run_monitored_generation, Binding, Clock, DeerVerifier, EatVerifier, Game24Verifier, KStableVerifier,
    MazeVerifier, MonitorConfig, Policy, RunOutcome, RunStatus, SpatialVerifier, DEFAULT_MAX_INTERVENTIONS,
};
use crate::search::{
    best_of_k, generate_test_loop, majority_of_k, tot_search, Candidate, Critic, CriticKind, GoldOracleCritic,
    LlmJudgeCritic, LlmProposer, LlmValuer, SearchOutcome, StepVerifierValuer, ToTConfig, VerifierScoreCritic,
    DEFAULT_JUDGE_TEMPLATE,
};
use crate::stopping::{
    Aggregation, DeerConfig, EntropyTracker, EquivalenceChecker, EquivalenceMode, Judge, JudgeError, DEFAULT_DEER_SUFFIX,
    DEFAULT_EAT_SUFFIX,
};
use crate::taskgen::{answer_region, PromptStyle, TaskInstance, TaskPayload, TemplateSet, NO_ANSWER};
use crate::trace::{ActionKind, ReasoningTrace};
use crate::verdict::Verdict;

fn default_max_interventions() -> u32 {
    DEFAULT_MAX_INTERVENTIONS
}

fn default_alpha() -> f64 {
    EntropyTracker::DEFAULT_ALPHA
}

fn default_eat_suffix() -> String {
    DEFAULT_EAT_SUFFIX.into()
}

fn default_deer_suffix() -> String {
    DEFAULT_DEER_SUFFIX.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValuerKind {
    ValuePrompt,
    StepVerifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Cot,
    StepVerify {
        #[serde(default = "default_max_interventions")]
        max_interventions: u32,
    },
    KStable {
        k: u32,
        #[serde(default)]
        equivalence: EquivalenceMode,
    },
    Eat {
        threshold: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_eat_suffix")]
        probe_suffix: String,
    },
    Deer {
        threshold: f64,
        #[serde(default)]
        aggregation: Aggregation,
        #[serde(default = "default_deer_suffix")]
        probe_suffix: String,
    },
    BestOfK {
        k: u32,
        critic: CriticKind,
    },
    MajorityVote {
        k: u32,
        critic: CriticKind,
    },
    GenerateTest {
        max_iters: u32,
    },
    Tot {
        #[serde(default)]
        config: ToTConfig,
        valuer: ValuerKind,
    },
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Cot => "cot".into(),
            MethodSpec::StepVerify { .. } => "stepverify".into(),
            MethodSpec::KStable { k, .. } => format!("kstable-{k}"),
            MethodSpec::Eat { threshold, .. } => format!("eat-{threshold}"),
            MethodSpec::Deer { threshold, .. } => format!("deer-{threshold}"),
            MethodSpec::BestOfK { k, .. } => format!("best_of_{k}"),
            MethodSpec::MajorityVote { k, .. } => format!("majority_{k}"),
            MethodSpec::GenerateTest { .. } => "generate_test".into(),
            MethodSpec::Tot { valuer: ValuerKind::ValuePrompt, .. } => "tot-value".into(),
            MethodSpec::Tot { valuer: ValuerKind::StepVerifier, .. } => "tot-verifier".into(),
        }
    }

    pub fn default_prompt_style(&self) -> PromptStyle {
        match self {
            MethodSpec::StepVerify { .. } | MethodSpec::GenerateTest { .. } => PromptStyle::Stepwise,
            MethodSpec::Tot { .. } => PromptStyle::Propose,
            _ => PromptStyle::Plain,
        }
    }

    /// Whether runs carry a soundness flag.
    pub fn binds_external_verifier(&self) -> bool {
        matches!(self, MethodSpec::StepVerify { .. } | MethodSpec::GenerateTest { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MethodError {
    #[error("configuration: {0}")]
    Configuration(String),
    #[error("instance: {0}")]
    Instance(String),
}

/// Step verifiers for the instance's task, with the feedback policy.
pub fn step_bindings(instance: &TaskInstance, max_interventions: u32) -> Result<Vec<Binding>, MethodError> {
    let b = match &instance.payload {
        TaskPayload::Maze { ascii } => {
            let grid = parse_maze(ascii).map_err(|e| MethodError::Instance(e.to_string()))?;
            Binding::new("maze_steps", MazeExtractor::default(), "maze", MazeVerifier::new(grid), Policy::feedback())
        }
        TaskPayload::Spatial { relations, .. } => Binding::new(
            "spatial_relations",
            SpatialExtractor::default(),
            "spatial",
            SpatialVerifier::new(relations),
            Policy::feedback(),
        ),
        TaskPayload::Game24 { numbers } => Binding::new(
            "equations",
            EquationExtractor::new(numbers),
            "game24",
            Game24Verifier::new(numbers),
            Policy::feedback(),
        ),
    };
    Ok(vec![b.with_max_interventions(max_interventions.max(1))])
}

/// Asks a model whether two answers agree.
pub struct LlmEquivalenceJudge {
    factory: Arc<dyn SessionFactory>,
}

impl LlmEquivalenceJudge {
    pub fn new(factory: Arc<dyn SessionFactory>) -> Self {
        Self { factory }
    }
}

impl Judge for LlmEquivalenceJudge {
    fn same(&self, a: &str, b: &str) -> Result<bool, JudgeError> {
        let prompt = format!(
            "Do these two answers state the same result?\nFirst: {a}\nSecond: {b}\nReply with yes or no."
        );
        let mut s = self.factory.open(&prompt, 0).map_err(|e| JudgeError(e.to_string()))?;
        let (text, _) = playback(&mut *s).map_err(|e| JudgeError(e.to_string()))?;
        let reply = answer_region(&text).to_ascii_lowercase();
        let yes = reply.rfind("yes");
        let no = reply.rfind("no");
        match (yes, no) {
            (Some(y), Some(n)) => Ok(y > n),
            (Some(_), None) => Ok(true),
            (None, Some(_)) => Ok(false),
            (None, None) => Err(JudgeError(format!("unreadable judge reply {reply:?}"))),
        }
    }
}

pub struct RunContext<'a> {
    pub factory: &'a dyn SessionFactory,
    pub templates: &'a TemplateSet,
    pub monitor: MonitorConfig,
    pub clock: &'a dyn Clock,
    /// Model used by pluggable equivalence and the LLM critic.
    pub judge: Option<Arc<dyn SessionFactory>>,
    pub prompt_style: Option<PromptStyle>,
    pub sample: u32,
    pub keep_trace: bool,
}

fn answer_binding(instance: &TaskInstance) -> Box<dyn crate::extraction::Extractor> {
    match instance.numbers() {
        Some(n) => Box::new(EquationExtractor::new(&n)),
        None => Box::new(AnswerExtractor::with_options(instance.option_pairs())),
    }
}

struct BoxedExtractor(Box<dyn crate::extraction::Extractor>);

impl crate::extraction::Extractor for BoxedExtractor {
    fn scan(&self, text: &str, cursor: usize, flush: bool) -> crate::extraction::ScanOutput {
        self.0.scan(text, cursor, flush)
    }
}

fn checker(mode: EquivalenceMode, ctx: &RunContext<'_>) -> Result<EquivalenceChecker, MethodError> {
    match mode {
        EquivalenceMode::Pluggable => {
            let f = ctx.judge.clone().ok_or_else(|| {
                MethodError::Configuration("pluggable equivalence needs a judge backend".into())
            })?;
            Ok(EquivalenceChecker::pluggable(Box::new(LlmEquivalenceJudge::new(f))))
        }
        m => Ok(EquivalenceChecker::new(m)),
    }
}

fn monitor_bindings(
    method: &MethodSpec,
    instance: &TaskInstance,
    ctx: &RunContext<'_>,
) -> Result<Vec<Binding>, MethodError> {
    Ok(match method {
        MethodSpec::Cot => Vec::new(),
        MethodSpec::StepVerify { max_interventions } => step_bindings(instance, *max_interventions)?,
        MethodSpec::KStable { k, equivalence } => {
            if *k == 0 {
                return Err(MethodError::Configuration("k must be at least 1".into()));
            }
            vec![Binding::new(
                "answers",
                BoxedExtractor(answer_binding(instance)),
                "kstable",
                KStableVerifier::new(*k, checker(*equivalence, ctx)?),
                Policy::stopper(),
            )]
        }
        MethodSpec::Eat { threshold, alpha, probe_suffix } => vec![Binding::new(
            "chunks",
            ChunkExtractor::default(),
            "eat",
            EatVerifier::new(*threshold, *alpha).with_suffix(probe_suffix),
            Policy::stopper(),
        )],
        MethodSpec::Deer { threshold, aggregation, probe_suffix } => {
            let config = DeerConfig {
                threshold: *threshold,
                aggregation: *aggregation,
                probe_suffix: probe_suffix.clone(),
                ..DeerConfig::default()
            };
            vec![Binding::new("chunks", ChunkExtractor::default(), "deer", DeerVerifier::new(config), Policy::stopper())]
        }
        _ => Vec::new(),
    })
}

fn base_record(instance: &TaskInstance, method: &MethodSpec) -> RunRecord {
    RunRecord {
        instance_id: instance.id.clone(),
        method: method.label(),
        final_answer: NO_ANSWER.into(),
        correct: false,
        model_tokens: 0,
        injected_tokens: 0,
        interventions: Vec::new(),
        sound: None,
        status: RunStatus::Failed,
        wall_ms: 0,
        seed: instance.seed,
        error: None,
        trace: None,
    }
}

fn finish_answer(record: &mut RunRecord, instance: &TaskInstance, answer: Option<String>) {
    record.correct = instance.is_correct(answer.as_deref());
    record.final_answer = answer.unwrap_or_else(|| NO_ANSWER.into());
}

fn from_monitor(record: &mut RunRecord, instance: &TaskInstance, out: RunOutcome, keep: bool) {
    record.status = out.status;
    record.error = out.halted_reason.filter(|_| out.status == RunStatus::Failed);
    record.model_tokens = out.trace.model_tokens();
    record.injected_tokens = out.trace.injected_tokens();
    record.interventions = out
        .verdict_log
        .iter()
        .filter(|e| e.action.kind != ActionKind::Continue)
        .map(|e| InterventionRecord { span: e.state.span, feedback: e.verdict.feedback.clone(), action: e.action.kind })
        .collect();
    let answer = match out.status {
        RunStatus::Abstained | RunStatus::Failed => None,
        _ => instance.read_answer(out.trace.body()),
    };
    finish_answer(record, instance, answer);
    if keep {
        record.trace = Some(out.trace);
    }
}

fn from_search(record: &mut RunRecord, instance: &TaskInstance, out: SearchOutcome, keep: bool) {
    record.status = RunStatus::Completed;
    record.model_tokens = out.total_model_tokens;
    finish_answer(record, instance, out.answer);
    if out.verified.is_some() {
        record.sound = out.verified;
    }
    if keep {
        record.trace = Some(out.trace);
    }
}

fn critic<'a>(kind: CriticKind, instance: &TaskInstance, ctx: &RunContext<'a>) -> Result<Box<dyn Critic + 'a>, MethodError> {
    Ok(match kind {
        CriticKind::GoldOracle => {
            let inst = instance.clone();
            Box::new(GoldOracleCritic::new(move |a| inst.is_correct(a)))
        }
        CriticKind::VerifierScore => {
            let inst = instance.clone();
            step_bindings(&inst, 1)?;
            Box::new(VerifierScoreCritic::new(move || step_bindings(&inst, 1).unwrap_or_default()))
        }
        CriticKind::LlmJudge => {
            let f = ctx.judge.clone().ok_or_else(|| MethodError::Configuration("LLM_JUDGE needs a judge backend".into()))?;
            Box::new(LlmJudgeCritic::new(ArcFactory(f), DEFAULT_JUDGE_TEMPLATE))
        }
    })
}

struct ArcFactory(Arc<dyn SessionFactory>);

impl SessionFactory for ArcFactory {
    fn open(
        &self,
        prompt: &str,
        sample: u32,
    ) -> Result<Box<dyn crate::backend::GenerationSession>, crate::backend::BackendError> {
        self.0.open(prompt, sample)
    }
}

/// Checks a finished candidate: every extracted state must verify and an answer
/// must be present (for Game of 24, the answer itself must verify).
pub fn candidate_check(instance: &TaskInstance, c: &Candidate) -> Verdict {
    if let Ok(mut b) = step_bindings(instance, 1) {
        match recheck(&c.trace, &mut b) {
            Ok(r) => {
                if let Some((_, _, v)) = r.failures.into_iter().next() {
                    return v;
                }
            }
            Err(e) => return Verdict::fail(e.to_string()),
        }
    }
    match (&c.answer, instance.numbers()) {
        (None, _) => Verdict::fail("no final answer was given"),
        (Some(a), Some(n)) => crate::game24::verify_game24(a, &n),
        (Some(_), None) => Verdict::pass(),
    }
}

fn run_tot(
    instance: &TaskInstance,
    config: &ToTConfig,
    valuer: ValuerKind,
    ctx: &RunContext<'_>,
) -> Result<(SearchOutcome, u32), MethodError> {
    let cfg_err = |e: crate::taskgen::TemplateError| MethodError::Configuration(e.to_string());
    let propose = ctx.templates.render(instance, PromptStyle::Propose).map_err(cfg_err)?;
    let mut proposer = LlmProposer::new(ctx.factory, &propose);
    let result = match valuer {
        ValuerKind::ValuePrompt => {
            let value = ctx.templates.render(instance, PromptStyle::Value).map_err(cfg_err)?;
            let mut v = LlmValuer::new(ctx.factory, &value, config.value_map);
            tot_search(&mut proposer, &mut v, config)
        }
        ValuerKind::StepVerifier => {
            let inst = instance.clone();
            step_bindings(&inst, 1)?;
            let mut v = StepVerifierValuer::new(move || step_bindings(&inst, 1).unwrap_or_default());
            tot_search(&mut proposer, &mut v, config)
        }
    };
    let out = result.map_err(|e| MethodError::Instance(e.to_string()))?;
    let mut trace = ReasoningTrace::new(propose);
    let mut text = out.path.join("\n");
    text.push('\n');
    trace.push_model(&text, out.tokens);
    let answer = out.path.last().and_then(|s| instance.read_answer(s));
    Ok((
        SearchOutcome {
            trace,
            answer,
            total_model_tokens: out.tokens,
            candidate_tokens: vec![out.tokens],
            scores: vec![out.score],
            iterations: out.expansions as u32,
            verified: None,
        },
        out.max_depth_reached as u32,
    ))
}

/// Runs one instance under `method`. Failures become FAILED records.
pub fn run_instance(instance: &TaskInstance, method: &MethodSpec, ctx: &RunContext<'_>) -> RunRecord {
    let start = ctx.clock.elapsed_secs();
    let mut record = base_record(instance, method);
    if let Err(e) = run_into(&mut record, instance, method, ctx) {
        record.status = RunStatus::Failed;
        record.error = Some(e.to_string());
        record.correct = false;
    }
    if method.binds_external_verifier() && record.sound.is_none() {
        record.sound = Some(false);
    }
    record.wall_ms = ((ctx.clock.elapsed_secs() - start).max(0.0) * 1000.0) as u64;
    record
}

fn run_into(
    record: &mut RunRecord,
    instance: &TaskInstance,
    method: &MethodSpec,
    ctx: &RunContext<'_>,
) -> Result<(), MethodError> {
    let style = ctx.prompt_style.unwrap_or(method.default_prompt_style());
    let prompt = ctx
        .templates
        .render(instance, if matches!(method, MethodSpec::Tot { .. }) { PromptStyle::Propose } else { style })
        .map_err(|e| MethodError::Configuration(e.to_string()))?;
    let read = |t: &ReasoningTrace| instance.read_answer(t.body());
    let search_err = |e: crate::search::SearchError| MethodError::Instance(e.to_string());
    match method {
        MethodSpec::Cot
        | MethodSpec::StepVerify { .. }
        | MethodSpec::KStable { .. }
        | MethodSpec::Eat { .. }
        | MethodSpec::Deer { .. } => {
            let mut bindings = monitor_bindings(method, instance, ctx)?;
            let mut session = ctx.factory.open(&prompt, ctx.sample).map_err(|e| MethodError::Configuration(e.to_string()))?;
            let out = run_monitored_generation(&prompt, &mut *session, &mut bindings, &ctx.monitor, ctx.clock);
            session.close();
            if let MethodSpec::StepVerify { .. } = method {
                record.sound = Some(match out.status {
                    RunStatus::Abstained => true,
                    RunStatus::Failed => false,
                    _ => {
                        let mut fresh = step_bindings(instance, 1)?;
                        recheck(&out.trace, &mut fresh).map(|r| r.sound()).unwrap_or(false)
                    }
                });
            }
            from_monitor(record, instance, out, ctx.keep_trace);
        }
        MethodSpec::BestOfK { k, critic: kind } => {
            let c = critic(*kind, instance, ctx)?;
            let out = best_of_k(ctx.factory, &prompt, *k, &*c, &ctx.monitor, ctx.clock, &read).map_err(search_err)?;
            from_search(record, instance, out, ctx.keep_trace);
        }
        MethodSpec::MajorityVote { k, critic: kind } => {
            let c = critic(*kind, instance, ctx)?;
            let out = majority_of_k(ctx.factory, &prompt, *k, &*c, &ctx.monitor, ctx.clock, &read).map_err(search_err)?;
            from_search(record, instance, out, ctx.keep_trace);
        }
        MethodSpec::GenerateTest { max_iters } => {
            let mut test = |c: &Candidate| candidate_check(instance, c);
            let out = generate_test_loop(ctx.factory, &prompt, *max_iters, &mut test, &ctx.monitor, ctx.clock, &read)
                .map_err(search_err)?;
            from_search(record, instance, out, ctx.keep_trace);
        }
        MethodSpec::Tot { config, valuer } => {
            let (out, _) = run_tot(instance, config, *valuer, ctx)?;
            from_search(record, instance, out, ctx.keep_trace);
        }
    }
    Ok(())
}
