//! The sequential verifier: one trace, scanned as it streams, with every
//! extracted state verified once and failures acted on before more model
//! tokens are consumed.

mod verifiers;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationSession};
use crate::extraction::{ExtractedState, Extractor};
use crate::stopping::{JudgeError, StoppingError};
use crate::trace::{
    apply_intervention, ActionKind, InsertAt, InterventionAction, InterventionStyle, Origin, ReasoningTrace, TraceError,
    END_THINK,
};
use crate::verdict::{Span, Verdict};

pub use verifiers::{
    DeerVerifier, DualCounterVerifier, EatVerifier, Game24Verifier, KStableVerifier, MazeVerifier, SpatialVerifier,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("this verifier needs a live session")]
    MissingSession,
}

pub struct VerifyContext<'a> {
    /// Absent during offline re-checks.
    pub session: Option<&'a mut dyn GenerationSession>,
    /// The trace body as of the verification.
    pub body: &'a str,
}

/// Checks extracted states. Implementations may keep per-run state.
pub trait Verifier: Send {
    fn verify(&mut self, state: &ExtractedState, ctx: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError>;
}

/// How a verdict becomes an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    /// Failures inject the verifier's feedback; once the budget is spent, HALT.
    Feedback { insert_at: InsertAt },
    /// A passing verdict means "stop thinking": inject end-of-thinking once.
    StopOnPass { insert_at: InsertAt },
    HaltOnFail,
}

impl Policy {
    pub const fn feedback() -> Self {
        Policy::Feedback { insert_at: InsertAt::AfterState }
    }

    pub const fn stopper() -> Self {
        Policy::StopOnPass { insert_at: InsertAt::AfterState }
    }

    pub fn is_stopper(&self) -> bool {
        matches!(self, Policy::StopOnPass { .. })
    }

    /// Whether states of this binding must hold in the final trace.
    pub fn is_external(&self) -> bool {
        !self.is_stopper()
    }
}

pub const DEFAULT_MAX_INTERVENTIONS: u32 = 3;
pub const GENERIC_FEEDBACK: &str = "the previous step does not check out. Re-examine it before continuing.";

pub struct Binding {
    pub extractor_id: String,
    pub verifier_id: String,
    pub extractor: Box<dyn Extractor>,
    pub verifier: Box<dyn Verifier>,
    pub policy: Policy,
    pub max_interventions: u32,
}

impl Binding {
    pub fn new(
        extractor_id: &str,
        extractor: impl Extractor + 'static,
        verifier_id: &str,
        verifier: impl Verifier + 'static,
        policy: Policy,
    ) -> Self {
        Self {
            extractor_id: extractor_id.into(),
            verifier_id: verifier_id.into(),
            extractor: Box::new(extractor),
            verifier: Box::new(verifier),
            policy,
            max_interventions: DEFAULT_MAX_INTERVENTIONS,
        }
    }

    pub fn with_max_interventions(mut self, n: u32) -> Self {
        assert!(n >= 1, "max_interventions must be positive");
        self.max_interventions = n;
        self
    }

    fn decide(&self, verdict: &Verdict, used: u32, think_closed: bool) -> InterventionAction {
        match self.policy {
            Policy::Feedback { insert_at } if !verdict.pass => {
                if used >= self.max_interventions {
                    InterventionAction::halt()
                } else {
                    InterventionAction::inject_text(verdict.feedback.as_deref().unwrap_or(GENERIC_FEEDBACK), insert_at)
                }
            }
            Policy::StopOnPass { insert_at } if verdict.pass && !think_closed => InterventionAction::end_think(insert_at),
            Policy::HaltOnFail if !verdict.pass => InterventionAction::halt(),
            _ => InterventionAction::continue_(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorLimits {
    pub max_total_tokens: u64,
    pub max_wall_seconds: f64,
}

impl Default for MonitorLimits {
    fn default() -> Self {
        Self { max_total_tokens: 32_768, max_wall_seconds: 3600.0 }
    }
}

impl MonitorLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_total_tokens == 0 || !(self.max_wall_seconds > 0.0) {
            return Err("monitor limits must be strictly positive".into());
        }
        Ok(())
    }
}

/// Elapsed time source; the core crate has no clock of its own.
pub trait Clock {
    fn elapsed_secs(&self) -> f64;
}

pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_secs(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    /// HALTed after the intervention budget ran out; no answer is reported.
    Abstained,
    Truncated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub binding: usize,
    pub state: ExtractedState,
    pub verdict: Verdict,
    pub action: InterventionAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: ReasoningTrace,
    pub status: RunStatus,
    pub halted_reason: Option<String>,
    pub verdict_log: Vec<LogEntry>,
}

impl RunOutcome {
    pub fn interventions(&self) -> impl Iterator<Item = &LogEntry> {
        self.verdict_log.iter().filter(|e| e.action.kind != ActionKind::Continue)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorConfig {
    pub limits: MonitorLimits,
    pub style: InterventionStyle,
}

enum Step {
    Quiet,
    Intervened,
    Halted(String),
    Failed(String),
}

struct Run<'a> {
    session: &'a mut dyn GenerationSession,
    bindings: &'a mut [Binding],
    style: &'a InterventionStyle,
    trace: ReasoningTrace,
    cursors: Vec<usize>,
    used: Vec<u32>,
    log: Vec<LogEntry>,
}

impl Run<'_> {
    fn scan(&mut self, flush: bool) -> Step {
        let mut batch: Vec<(usize, ExtractedState)> = Vec::new();
        for (i, b) in self.bindings.iter().enumerate() {
            if b.policy.is_stopper() && self.trace.think_closed() {
                continue;
            }
            let out = b.extractor.scan(self.trace.body(), self.cursors[i], flush);
            self.cursors[i] = out.cursor.max(self.cursors[i]);
            batch.extend(out.states.into_iter().map(|s| (i, s)));
        }
        batch.sort_by_key(|(i, s)| (s.span.end, *i));
        for (i, state) in batch {
            if self.bindings[i].policy.is_stopper() && self.trace.think_closed() {
                continue;
            }
            let verdict = {
                let mut ctx = VerifyContext { session: Some(&mut *self.session), body: self.trace.body() };
                match self.bindings[i].verifier.verify(&state, &mut ctx) {
                    Ok(v) => v.with_span(state.span),
                    Err(e) => return Step::Failed(format!("verifier {}: {e}", self.bindings[i].verifier_id)),
                }
            };
            let action = self.bindings[i].decide(&verdict, self.used[i], self.trace.think_closed());
            let span = state.span;
            self.log.push(LogEntry { binding: i, state, verdict, action: action.clone() });
            match action.kind {
                ActionKind::Continue => {}
                ActionKind::Halt => {
                    let _ = apply_intervention(&mut self.trace, &action, span, self.style);
                    let b = &self.bindings[i];
                    return Step::Halted(format!(
                        "{} failed after {} interventions; abstaining",
                        b.verifier_id, self.used[i]
                    ));
                }
                ActionKind::InjectText | ActionKind::InjectEndThink => {
                    match apply_intervention(&mut self.trace, &action, span, self.style) {
                        Ok(()) => {}
                        Err(TraceError::SpanOutsideModelText { .. }) => {
                            let tail = InterventionAction { insert_at: InsertAt::AtTail, ..action.clone() };
                            if let Err(e) = apply_intervention(&mut self.trace, &tail, span, self.style) {
                                return Step::Failed(format!("intervention failed: {e}"));
                            }
                        }
                        Err(e) => return Step::Failed(format!("intervention failed: {e}")),
                    }
                    if action.kind == ActionKind::InjectText {
                        self.used[i] += 1;
                    }
                    let end = self.trace.body().len();
                    self.cursors.iter_mut().for_each(|c| *c = end);
                    return Step::Intervened;
                }
            }
        }
        Step::Quiet
    }
}

/// Drives `session` to completion under `bindings`. An empty binding list is
/// plain chain-of-thought.
pub fn run_monitored_generation(
    prompt: &str,
    session: &mut dyn GenerationSession,
    bindings: &mut [Binding],
    config: &MonitorConfig,
    clock: &dyn Clock,
) -> RunOutcome {
    let n = bindings.len();
    let mut run = Run {
        session,
        bindings,
        style: &config.style,
        trace: ReasoningTrace::new(prompt),
        cursors: vec![0; n],
        used: vec![0; n],
        log: Vec::new(),
    };
    let finish = |run: Run<'_>, status, reason: Option<String>| RunOutcome {
        trace: run.trace,
        status,
        halted_reason: reason,
        verdict_log: run.log,
    };
    loop {
        let event = match run.session.next_event() {
            Ok(e) => e,
            Err(e) => return finish(run, RunStatus::Failed, Some(format!("backend: {e}"))),
        };
        let flush = event.is_none();
        if let Some(ev) = &event {
            run.trace.push_model(&ev.text, u64::from(!ev.continuation));
        }
        match run.scan(flush) {
            Step::Quiet => {}
            Step::Intervened => {
                if let Err(e) = run.session.continue_from(&run.trace) {
                    return finish(run, RunStatus::Failed, Some(format!("backend: {e}")));
                }
                continue;
            }
            Step::Halted(reason) => {
                run.session.cancel();
                return finish(run, RunStatus::Abstained, Some(reason));
            }
            Step::Failed(reason) => {
                run.session.cancel();
                return finish(run, RunStatus::Failed, Some(reason));
            }
        }
        if flush {
            return finish(run, RunStatus::Completed, None);
        }
        if run.trace.model_tokens() >= config.limits.max_total_tokens {
            run.session.cancel();
            return finish(run, RunStatus::Truncated, Some("token limit reached".into()));
        }
        if clock.elapsed_secs() > config.limits.max_wall_seconds {
            run.session.cancel();
            return finish(run, RunStatus::Truncated, Some("wall-clock limit reached".into()));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecheckReport {
    pub checked: usize,
    pub failures: Vec<(usize, ExtractedState, Verdict)>,
}

impl RecheckReport {
    pub fn sound(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-verifies every surviving state of a finished trace with fresh bindings.
///
/// States overlapping injected text, and states cut off by a feedback
/// injection right after them, were retracted during the run and are skipped.
/// Stopping bindings are not re-checked.
pub fn recheck(trace: &ReasoningTrace, bindings: &mut [Binding]) -> Result<RecheckReport, MonitorError> {
    let injected: Vec<(Span, bool)> = trace
        .segment_spans()
        .into_iter()
        .zip(trace.segments())
        .filter(|((_, o), _)| *o == Origin::Intervention)
        .map(|((s, _), seg)| (s, seg.text.starts_with(END_THINK)))
        .collect();
    let retracted = |span: Span| {
        injected.iter().any(|(s, end_think)| {
            (span.start < s.end && s.start < span.end) || (!end_think && s.start == span.end)
        })
    };
    let mut batch: Vec<(usize, ExtractedState)> = Vec::new();
    for (i, b) in bindings.iter().enumerate() {
        if !b.policy.is_external() {
            continue;
        }
        let out = b.extractor.scan(trace.body(), 0, true);
        batch.extend(out.states.into_iter().filter(|s| !retracted(s.span)).map(|s| (i, s)));
    }
    batch.sort_by_key(|(i, s)| (s.span.end, *i));
    let mut report = RecheckReport::default();
    for (i, state) in batch {
        let mut ctx = VerifyContext { session: None, body: trace.body() };
        let verdict = bindings[i].verifier.verify(&state, &mut ctx)?;
        report.checked += 1;
        if !verdict.pass {
            report.failures.push((i, state, verdict));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
