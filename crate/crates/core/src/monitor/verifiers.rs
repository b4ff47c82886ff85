use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{MonitorError, Verifier, VerifyContext};
use crate::extraction::{ExtractedState, Payload, StateKind};
use crate::game24::verify_game24;
use crate::maze::{verify_locate, verify_step, MazeGrid, MazeStepPayload};
use crate::spatial::{DiagRelation, RelationStore};
use crate::stopping::{
    deer_probe, eat_step, CounterKind, Decision, DeerConfig, DualCounter, EntropyTracker, EquivalenceChecker,
    StabilityCounter, DEFAULT_EAT_SUFFIX,
};
use crate::verdict::Verdict;

fn malformed(reason: &str, format_hint: &str) -> Verdict {
    Verdict::fail(format!("{reason}. {format_hint}"))
}

fn stop_verdict(d: Decision) -> Verdict {
    match d {
        Decision::Stop => Verdict::pass(),
        Decision::Continue => Verdict::fail_silent(),
    }
}

/// Checks maze locate and step blocks against the grid, keeping the accepted steps.
pub struct MazeVerifier {
    grid: MazeGrid,
    history: Vec<MazeStepPayload>,
}

impl MazeVerifier {
    pub fn new(grid: MazeGrid) -> Self {
        Self { grid, history: Vec::new() }
    }

    pub fn accepted(&self) -> &[MazeStepPayload] {
        &self.history
    }
}

const MAZE_FORMAT: &str =
    "Each step lists Current position, Previous direction, Current direction, Turn type and Running count";

impl Verifier for MazeVerifier {
    fn verify(&mut self, state: &ExtractedState, _: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        Ok(match &state.payload {
            Payload::MazeStep(step) => {
                let v = verify_step(&self.grid, &self.history, step);
                if v.pass {
                    self.history.push(step.clone());
                }
                v
            }
            Payload::MazeLocate { s, e } => verify_locate(&self.grid, *s, *e),
            Payload::Malformed { reason } => malformed(reason, MAZE_FORMAT),
            _ => Verdict::pass(),
        })
    }
}

/// Keeps a relation store seeded with the map's relations.
pub struct SpatialVerifier {
    store: RelationStore,
    known: BTreeSet<String>,
}

impl SpatialVerifier {
    /// `map` holds the relations stated in the problem; their entities are
    /// the only names accepted.
    pub fn new(map: &[DiagRelation]) -> Self {
        let mut store = RelationStore::new();
        let mut known = BTreeSet::new();
        for r in map {
            known.insert(r.subject.clone());
            known.insert(r.object.clone());
            let _ = store.assert_relation(r);
        }
        Self { store, known }
    }

    /// Accepts any entity names; the store starts empty.
    pub fn unseeded() -> Self {
        Self { store: RelationStore::new(), known: BTreeSet::new() }
    }

    fn unknown<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
        if self.known.is_empty() {
            return None;
        }
        names.into_iter().find(|n| !self.known.contains(*n))
    }
}

const SPATIAL_FORMAT: &str = "List each relation as `X is to the <Northwest|Northeast|Southwest|Southeast> of Y` using full entity names";

impl Verifier for SpatialVerifier {
    fn verify(&mut self, state: &ExtractedState, _: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        Ok(match &state.payload {
            Payload::RelationSet { relations } => {
                let mut trial = self.store.clone();
                for r in relations {
                    if let Some(name) = self.unknown([r.subject.as_str(), r.object.as_str()]) {
                        return Ok(Verdict::fail(format!(
                            "\"{name}\" in \"{}\" is not an object on the map. Use the complete full name of each object.",
                            r.sentence()
                        )));
                    }
                    let v = trial.assert_relation(r);
                    if !v.pass {
                        return Ok(v);
                    }
                }
                self.store = trial;
                Verdict::pass()
            }
            Payload::Conclusion(claim) => {
                if let Some(name) = self.unknown([claim.subject.as_str(), claim.object.as_str()]) {
                    return Ok(Verdict::fail(format!(
                        "\"{name}\" is not an object on the map. Use the complete full name of each object."
                    )));
                }
                self.store.verify_conclusion(claim)
            }
            Payload::Malformed { reason } => malformed(reason, SPATIAL_FORMAT),
            _ => Verdict::pass(),
        })
    }
}

pub struct Game24Verifier {
    inputs: Vec<u64>,
}

impl Game24Verifier {
    pub fn new(inputs: &[u64]) -> Self {
        Self { inputs: inputs.to_vec() }
    }
}

impl Verifier for Game24Verifier {
    fn verify(&mut self, state: &ExtractedState, _: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        Ok(match &state.payload {
            Payload::Equation { expr } => verify_game24(expr, &self.inputs),
            Payload::Malformed { reason } => Verdict::fail(reason.clone()),
            _ => Verdict::pass(),
        })
    }
}

/// Passes once k consecutive proposals agree.
pub struct KStableVerifier {
    counter: StabilityCounter,
    checker: EquivalenceChecker,
}

impl KStableVerifier {
    pub fn new(k: u32, checker: EquivalenceChecker) -> Self {
        Self { counter: StabilityCounter::new(k), checker }
    }
}

impl Verifier for KStableVerifier {
    fn verify(&mut self, state: &ExtractedState, _: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        if state.is_malformed() {
            return Ok(Verdict::fail_silent());
        }
        Ok(stop_verdict(self.counter.update(&state.payload_text(), &self.checker)?))
    }
}

/// Separate stability counters for two artifact families.
pub struct DualCounterVerifier {
    counters: DualCounter,
    checker: EquivalenceChecker,
    pre_family: String,
    post_family: String,
}

impl DualCounterVerifier {
    pub fn new(k: u32, checker: EquivalenceChecker, pre_family: &str, post_family: &str) -> Self {
        Self { counters: DualCounter::new(k), checker, pre_family: pre_family.into(), post_family: post_family.into() }
    }
}

impl Verifier for DualCounterVerifier {
    fn verify(&mut self, state: &ExtractedState, _: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        let Payload::Artifact { family, text } = &state.payload else {
            return Ok(Verdict::fail_silent());
        };
        let kind = if *family == self.pre_family {
            CounterKind::Pre
        } else if *family == self.post_family {
            CounterKind::Post
        } else {
            return Ok(Verdict::fail_silent());
        };
        Ok(stop_verdict(self.counters.update(kind, text, &self.checker)?))
    }
}

/// Entropy after a forced end-of-thinking, probed at each chunk boundary.
pub struct EatVerifier {
    tracker: EntropyTracker,
    suffix: String,
}

impl EatVerifier {
    pub fn new(threshold: f64, alpha: f64) -> Self {
        Self { tracker: EntropyTracker::new(threshold, alpha), suffix: DEFAULT_EAT_SUFFIX.into() }
    }

    pub fn with_suffix(mut self, suffix: &str) -> Self {
        self.suffix = suffix.into();
        self
    }
}

impl Verifier for EatVerifier {
    fn verify(&mut self, state: &ExtractedState, ctx: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        if state.kind != StateKind::ChunkBoundary {
            return Ok(Verdict::fail_silent());
        }
        let session = ctx.session.as_deref_mut().ok_or(MonitorError::MissingSession)?;
        let context = &ctx.body[..state.span.start];
        Ok(stop_verdict(eat_step(&mut self.tracker, session, context, &self.suffix)?))
    }
}

/// Probed answer confidence at each chunk boundary.
pub struct DeerVerifier {
    config: DeerConfig,
}

impl DeerVerifier {
    pub fn new(config: DeerConfig) -> Self {
        Self { config }
    }
}

impl Verifier for DeerVerifier {
    fn verify(&mut self, state: &ExtractedState, ctx: &mut VerifyContext<'_>) -> Result<Verdict, MonitorError> {
        if state.kind != StateKind::ChunkBoundary {
            return Ok(Verdict::fail_silent());
        }
        let session = ctx.session.as_deref_mut().ok_or(MonitorError::MissingSession)?;
        let context = &ctx.body[..state.span.start];
        Ok(stop_verdict(deer_probe(&self.config, session, context)?))
    }
}
