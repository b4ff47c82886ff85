//! Internal stopping rules: answer stability, entropy after a forced
//! end-of-thinking, and probed answer confidence.

mod equivalence;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationSession, TopLogprob};

pub use equivalence::{normalize_payload, EquivalenceChecker, EquivalenceMode, Judge, JudgeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoppingError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("invalid logprob {0}")]
    InvalidLogprob(f64),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// Streak of consecutive equivalent payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityCounter {
    pub k: u32,
    pub last_payload: Option<String>,
    pub streak: u32,
}

impl StabilityCounter {
    pub fn new(k: u32) -> Self {
        assert!(k >= 1, "k must be positive");
        Self { k, last_payload: None, streak: 0 }
    }

    pub fn update(&mut self, payload: &str, checker: &EquivalenceChecker) -> Result<Decision, JudgeError> {
        let same = match &self.last_payload {
            Some(last) => checker.equivalent(last, payload)?,
            None => false,
        };
        self.streak = if same { (self.streak + 1).min(self.k) } else { 1 };
        self.last_payload = Some(payload.into());
        Ok(if self.streak >= self.k { Decision::Stop } else { Decision::Continue })
    }

    pub fn is_stable(&self) -> bool {
        self.streak >= self.k
    }
}

/// Index (1-based) at which k-stable stopping fires on `payloads`, if ever.
pub fn kstable_stop_index(payloads: &[&str], k: u32, checker: &EquivalenceChecker) -> Result<Option<usize>, JudgeError> {
    let mut c = StabilityCounter::new(k);
    for (i, p) in payloads.iter().enumerate() {
        if c.update(p, checker)? == Decision::Stop {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CounterKind {
    Pre,
    Post,
}

/// Two independent stability counters; stops only when both are stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualCounter {
    pub pre: StabilityCounter,
    pub post: StabilityCounter,
}

impl DualCounter {
    pub fn new(k: u32) -> Self {
        Self { pre: StabilityCounter::new(k), post: StabilityCounter::new(k) }
    }

    pub fn update(&mut self, kind: CounterKind, payload: &str, checker: &EquivalenceChecker) -> Result<Decision, JudgeError> {
        match kind {
            CounterKind::Pre => self.pre.update(payload, checker)?,
            CounterKind::Post => self.post.update(payload, checker)?,
        };
        Ok(if self.pre.is_stable() && self.post.is_stable() { Decision::Stop } else { Decision::Continue })
    }
}

/// Entropy in nats of the distribution renormalized over the given entries.
pub fn shannon_entropy(dist: &[TopLogprob]) -> Result<f64, StoppingError> {
    if dist.is_empty() {
        return Err(StoppingError::EmptyDistribution);
    }
    if let Some(bad) = dist.iter().find(|t| !(t.logprob <= 0.0)) {
        return Err(StoppingError::InvalidLogprob(bad.logprob));
    }
    let max = dist.iter().map(|t| t.logprob).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(StoppingError::EmptyDistribution);
    }
    let weights: Vec<f64> = dist.iter().map(|t| libm::exp(t.logprob - max)).collect();
    let z: f64 = weights.iter().sum();
    let h = -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / z;
            p * libm::log(p)
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTracker {
    pub ema: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub initialized: bool,
}

impl EntropyTracker {
    pub const DEFAULT_ALPHA: f64 = 0.3;

    pub fn new(threshold: f64, alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
        assert!(threshold > 0.0, "threshold must be positive");
        Self { ema: 0.0, alpha, threshold, initialized: false }
    }

    pub fn update(&mut self, entropy: f64) -> Decision {
        self.ema = if self.initialized { self.alpha * entropy + (1.0 - self.alpha) * self.ema } else { entropy };
        self.initialized = true;
        if self.ema < self.threshold {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }
}

pub const EAT_THRESHOLDS: [f64; 8] = [0.2, 0.1, 0.04, 0.008, 0.005, 0.003, 0.001, 1e-4];
pub const DEER_THRESHOLDS: [f64; 8] = [0.85, 0.9, 0.93, 0.95, 0.97, 0.98, 0.99, 0.995];
pub const K_VALUES: [u32; 9] = [2, 3, 4, 5, 6, 7, 10, 15, 100];

pub const DEFAULT_EAT_SUFFIX: &str = "</think>";
pub const DEFAULT_DEER_SUFFIX: &str = "</think> The answer is";

/// Probes after a forced end-of-thinking and feeds the entropy to `tracker`.
pub fn eat_step(
    tracker: &mut EntropyTracker,
    session: &mut dyn GenerationSession,
    context: &str,
    suffix: &str,
) -> Result<Decision, StoppingError> {
    let dist = session.probe_next_distribution(context, suffix)?;
    Ok(tracker.update(shannon_entropy(&dist)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Aggregation {
    #[default]
    GeometricMean,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeerConfig {
    pub threshold: f64,
    pub probe_suffix: String,
    pub aggregation: Aggregation,
    /// Most answer tokens read greedily per probe.
    pub max_answer_tokens: u32,
    /// A greedy token whose trimmed text is one of these ends the answer.
    pub stop_tokens: Vec<String>,
}

impl Default for DeerConfig {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            probe_suffix: DEFAULT_DEER_SUFFIX.into(),
            aggregation: Aggregation::GeometricMean,
            max_answer_tokens: 8,
            stop_tokens: [".", "}", "", "</s>", "<|im_end|>"].map(String::from).to_vec(),
        }
    }
}

pub fn aggregate_confidence(probs: &[f64], aggregation: Aggregation) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    match aggregation {
        Aggregation::GeometricMean => libm::exp(probs.iter().map(|&p| libm::log(p)).sum::<f64>() / probs.len() as f64),
        Aggregation::Min => probs.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Greedily reads the probed answer and returns its aggregated confidence.
pub fn deer_confidence(
    config: &DeerConfig,
    session: &mut dyn GenerationSession,
    context: &str,
) -> Result<f64, StoppingError> {
    let mut suffix = config.probe_suffix.clone();
    let mut probs = Vec::new();
    for _ in 0..config.max_answer_tokens {
        let dist = session.probe_next_distribution(context, &suffix)?;
        let Some(top) = dist.iter().max_by(|a, b| a.logprob.total_cmp(&b.logprob)) else { break };
        if config.stop_tokens.iter().any(|s| s == top.token.trim()) {
            break;
        }
        probs.push(libm::exp(top.logprob));
        suffix.push_str(&top.token);
    }
    Ok(aggregate_confidence(&probs, config.aggregation))
}

pub fn deer_probe(
    config: &DeerConfig,
    session: &mut dyn GenerationSession,
    context: &str,
) -> Result<Decision, StoppingError> {
    let c = deer_confidence(config, session, context)?;
    Ok(if c > config.threshold { Decision::Stop } else { Decision::Continue })
}
