//! Multi-trace baselines: sampling with a critic, majority vote, generate-test
//! loops, and beam-searched tree of thoughts.

mod tot;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, SessionFactory};
use crate::monitor::{recheck, run_monitored_generation, Binding, Clock, MonitorConfig, RunStatus};
use crate::taskgen::NO_ANSWER;
use crate::trace::ReasoningTrace;
use crate::verdict::Verdict;

pub use tot::{
    is_terminal_state, parse_value_category, terminal_answer, tot_search, LlmProposer, LlmValuer, Proposals, Proposer,
    StepVerifierValuer, ToTConfig, ToTOutcome, ValueCategory, ValueMap, Valuation, Valuer,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("all {0} generations failed; last error: {1}")]
    AllFailed(u32, String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("critic failed: {0}")]
    Critic(String),
    #[error("search frontier emptied at depth {0} with no terminal state")]
    FrontierEmpty(u32),
    #[error("invalid search configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CriticKind {
    LlmJudge,
    VerifierScore,
    GoldOracle,
}

/// One complete, unmonitored generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub trace: ReasoningTrace,
    pub answer: Option<String>,
    pub status: RunStatus,
}

impl Candidate {
    pub fn tokens(&self) -> u64 {
        self.trace.model_tokens()
    }
}

/// Scores a complete candidate trace.
pub trait Critic: Send + Sync {
    fn kind(&self) -> CriticKind;
    fn score(&self, prompt: &str, candidate: &Candidate) -> Result<f64, SearchError>;
}

/// 1 when the candidate's answer is correct, else 0.
pub struct GoldOracleCritic {
    is_correct: Box<dyn Fn(Option<&str>) -> bool + Send + Sync>,
}

impl GoldOracleCritic {
    pub fn new(is_correct: impl Fn(Option<&str>) -> bool + Send + Sync + 'static) -> Self {
        Self { is_correct: Box::new(is_correct) }
    }
}

impl Critic for GoldOracleCritic {
    fn kind(&self) -> CriticKind {
        CriticKind::GoldOracle
    }

    fn score(&self, _: &str, c: &Candidate) -> Result<f64, SearchError> {
        Ok(if (self.is_correct)(c.answer.as_deref()) { 1.0 } else { 0.0 })
    }
}

/// Fraction of extracted states that pass a fresh set of verifiers; 0 when
/// nothing could be extracted.
pub struct VerifierScoreCritic {
    bindings: Box<dyn Fn() -> Vec<Binding> + Send + Sync>,
}

impl VerifierScoreCritic {
    pub fn new(bindings: impl Fn() -> Vec<Binding> + Send + Sync + 'static) -> Self {
        Self { bindings: Box::new(bindings) }
    }
}

impl Critic for VerifierScoreCritic {
    fn kind(&self) -> CriticKind {
        CriticKind::VerifierScore
    }

    fn score(&self, _: &str, c: &Candidate) -> Result<f64, SearchError> {
        let mut b = (self.bindings)();
        let report = recheck(&c.trace, &mut b).map_err(|e| SearchError::Critic(e.to_string()))?;
        if report.checked == 0 {
            return Ok(0.0);
        }
        Ok((report.checked - report.failures.len()) as f64 / report.checked as f64)
    }
}

/// Asks a model to rate the trace; the last number in its reply is the score.
pub struct LlmJudgeCritic<F> {
    factory: F,
    template: String,
}

pub const DEFAULT_JUDGE_TEMPLATE: &str = "Problem:\n{prompt}\n\nProposed solution:\n{trace}\n\n\
Rate how likely the proposed solution is to be correct on a scale from 0 to 10. Reply with the number only.";

impl<F: SessionFactory> LlmJudgeCritic<F> {
    /// `template` may use `{prompt}` and `{trace}`.
    pub fn new(factory: F, template: &str) -> Self {
        Self { factory, template: template.into() }
    }
}

/// The last decimal number in `text`.
pub fn last_number(text: &str) -> Option<f64> {
    let mut last = None;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            last = text[start..i].trim_end_matches('.').parse().ok().or(last);
        } else {
            i += 1;
        }
    }
    last
}

impl<F: SessionFactory> Critic for LlmJudgeCritic<F> {
    fn kind(&self) -> CriticKind {
        CriticKind::LlmJudge
    }

    fn score(&self, prompt: &str, c: &Candidate) -> Result<f64, SearchError> {
        let judge_prompt = self.template.replace("{prompt}", prompt).replace("{trace}", c.trace.body());
        let mut s = self.factory.open(&judge_prompt, 0)?;
        let (text, _) = crate::backend::playback(&mut *s)?;
        Ok(last_number(crate::taskgen::answer_region(&text)).unwrap_or(0.0))
    }
}

pub type AnswerReader<'a> = &'a dyn Fn(&ReasoningTrace) -> Option<String>;

/// Runs one unmonitored generation.
pub fn generate_candidate(
    factory: &dyn SessionFactory,
    prompt: &str,
    sample: u32,
    config: &MonitorConfig,
    clock: &dyn Clock,
    read_answer: AnswerReader<'_>,
) -> Result<Candidate, SearchError> {
    let mut session = factory.open(prompt, sample)?;
    let out = run_monitored_generation(prompt, &mut *session, &mut [], config, clock);
    session.close();
    if out.status == RunStatus::Failed {
        return Err(SearchError::AllFailed(1, out.halted_reason.unwrap_or_default()));
    }
    let answer = read_answer(&out.trace);
    Ok(Candidate { trace: out.trace, answer, status: out.status })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub trace: ReasoningTrace,
    pub answer: Option<String>,
    /// Model tokens of every generation the method ran, summed.
    pub total_model_tokens: u64,
    pub candidate_tokens: Vec<u64>,
    pub scores: Vec<f64>,
    pub iterations: u32,
    /// Generate-test only: whether the returned candidate passed its check.
    pub verified: Option<bool>,
}

fn sample_k(
    factory: &dyn SessionFactory,
    prompt: &str,
    k: u32,
    critic: &dyn Critic,
    config: &MonitorConfig,
    clock: &dyn Clock,
    read_answer: AnswerReader<'_>,
) -> Result<(Vec<Candidate>, Vec<f64>, Vec<u64>), SearchError> {
    if k == 0 {
        return Err(SearchError::Config("K must be at least 1".into()));
    }
    let mut cands = Vec::new();
    let mut scores = Vec::new();
    let mut last_err = String::new();
    for i in 0..k {
        match generate_candidate(factory, prompt, i, config, clock, read_answer) {
            Ok(c) => {
                scores.push(critic.score(prompt, &c)?);
                cands.push(c);
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    if cands.is_empty() {
        return Err(SearchError::AllFailed(k, last_err));
    }
    let tokens = cands.iter().map(Candidate::tokens).collect();
    Ok((cands, scores, tokens))
}

fn argmax(scores: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate().filter(|(i, _)| eligible(*i)) {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// K independent generations; the highest-scoring one is returned (first on ties).
pub fn best_of_k(
    factory: &dyn SessionFactory,
    prompt: &str,
    k: u32,
    critic: &dyn Critic,
    config: &MonitorConfig,
    clock: &dyn Clock,
    read_answer: AnswerReader<'_>,
) -> Result<SearchOutcome, SearchError> {
    let (mut cands, scores, tokens) = sample_k(factory, prompt, k, critic, config, clock, read_answer)?;
    let best = argmax(&scores, |_| true).unwrap_or(0);
    let c = cands.swap_remove(best);
    Ok(SearchOutcome {
        trace: c.trace,
        answer: c.answer,
        total_model_tokens: tokens.iter().sum(),
        candidate_tokens: tokens,
        scores,
        iterations: k,
        verified: None,
    })
}

/// Most frequent answer; ties go to the answer of the best-scoring tied
/// candidate. Returns the answer and the index of the candidate that carries it,
/// or [`NO_ANSWER`] when nothing was extracted.
pub fn majority_vote(answers: &[Option<String>], scores: &[f64]) -> (String, Option<usize>) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers.iter().flatten() {
        *counts.entry(a.as_str()).or_insert(0) += 1;
    }
    let Some(top) = counts.values().copied().max() else { return (NO_ANSWER.to_string(), None) };
    let tied = |i: usize| answers[i].as_deref().is_some_and(|a| counts[a] == top);
    let score = |i: usize| scores.get(i).copied().unwrap_or(0.0);
    let padded: Vec<f64> = (0..answers.len()).map(score).collect();
    let best = argmax(&padded, tied).expect("a tied answer exists");
    (answers[best].clone().unwrap_or_default(), Some(best))
}

/// K generations and a vote over their final answers.
pub fn majority_of_k(
    factory: &dyn SessionFactory,
    prompt: &str,
    k: u32,
    critic: &dyn Critic,
    config: &MonitorConfig,
    clock: &dyn Clock,
    read_answer: AnswerReader<'_>,
) -> Result<SearchOutcome, SearchError> {
    let (mut cands, scores, tokens) = sample_k(factory, prompt, k, critic, config, clock, read_answer)?;
    let answers: Vec<Option<String>> = cands.iter().map(|c| c.answer.clone()).collect();
    let (answer, at) = majority_vote(&answers, &scores);
    let c = cands.swap_remove(at.unwrap_or(0));
    Ok(SearchOutcome {
        trace: c.trace,
        answer: at.map(|_| answer),
        total_model_tokens: tokens.iter().sum(),
        candidate_tokens: tokens,
        scores,
        iterations: k,
        verified: None,
    })
}

/// Prompt for a retry after `feedback` rejected the previous attempt.
pub fn retry_prompt(prompt: &str, feedback: &str) -> String {
    format!("{prompt}\n\nA previous attempt was checked and rejected: {feedback}\nSolve the problem again.\n")
}

/// Generate, check, and regenerate with the feedback until a candidate passes
/// or `max_iters` generations have run. Retry `i` is opened as sample `i`.
#[allow(clippy::too_many_arguments)]
pub fn generate_test_loop(
    factory: &dyn SessionFactory,
    prompt: &str,
    max_iters: u32,
    test: &mut dyn FnMut(&Candidate) -> Verdict,
    config: &MonitorConfig,
    clock: &dyn Clock,
    read_answer: AnswerReader<'_>,
) -> Result<SearchOutcome, SearchError> {
    if max_iters == 0 {
        return Err(SearchError::Config("max_iters must be at least 1".into()));
    }
    let mut tokens = Vec::new();
    let mut current = prompt.to_string();
    let mut last: Option<(Candidate, bool)> = None;
    for i in 0..max_iters {
        let c = generate_candidate(factory, &current, i, config, clock, read_answer)?;
        tokens.push(c.tokens());
        let v = test(&c);
        let pass = v.pass;
        if !pass {
            current = retry_prompt(prompt, v.feedback.as_deref().unwrap_or("the answer is wrong"));
        }
        last = Some((c, pass));
        if pass {
            break;
        }
    }
    let (c, pass) = last.expect("at least one iteration");
    Ok(SearchOutcome {
        trace: c.trace,
        answer: c.answer,
        total_model_tokens: tokens.iter().sum(),
        iterations: tokens.len() as u32,
        candidate_tokens: tokens,
        scores: Vec::new(),
        verified: Some(pass),
    })
}

#[cfg(test)]
mod tests;
