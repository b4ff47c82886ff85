//! Logic behind the `gen` and `verify` subcommands.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

use tracewarden_core::extraction::{EquationExtractor, MazeExtractor, SpatialExtractor};
use tracewarden_core::maze::parse_maze;
use tracewarden_core::monitor::{Binding, Game24Verifier, MazeVerifier, Policy, SpatialVerifier, VerifyContext};
use tracewarden_core::taskgen::{
    gen_game24_instance, gen_maze_instance, gen_spatial_instance, QuestionKind, TaskInstance, TaskKind, TaskPayload,
};

const GEN_ATTEMPTS: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub kind: TaskKind,
    pub n: usize,
    pub seed: u64,
    /// Fixed question kind; cycles through the task's kinds when absent.
    pub question: Option<QuestionKind>,
    pub maze_size: (usize, usize),
    pub objects: usize,
    /// Game24 only: how many of the `n` instances have no solution.
    pub unsolvable: usize,
}

impl GenOptions {
    pub fn new(kind: TaskKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed, question: None, maze_size: (9, 9), objects: 5, unsolvable: 0 }
    }
}

fn questions(kind: TaskKind) -> &'static [QuestionKind] {
    match kind {
        TaskKind::Maze => &[QuestionKind::RightTurns, QuestionKind::TotalTurns, QuestionKind::RelativePosition],
        TaskKind::Spatialmap => &[QuestionKind::Q0, QuestionKind::Q1, QuestionKind::Q2],
        TaskKind::Game24 => &[QuestionKind::Make24],
    }
}

/// Instance `i` uses seed `seed + i`; a seed that yields nothing is retried at
/// `seed + i + n * attempt`, which no other instance uses.
pub fn gen_instances(opts: &GenOptions) -> Result<Vec<TaskInstance>> {
    if opts.unsolvable > opts.n {
        bail!("--unsolvable exceeds --n");
    }
    let n = opts.n as u64;
    (0..opts.n)
        .map(|i| {
            let q = opts.question.unwrap_or(questions(opts.kind)[i % questions(opts.kind).len()]);
            let mut last = None;
            for attempt in 0..GEN_ATTEMPTS {
                let seed = opts.seed.wrapping_add(i as u64).wrapping_add(n.wrapping_mul(attempt));
                let r = match opts.kind {
                    TaskKind::Maze => gen_maze_instance(seed, opts.maze_size.0, opts.maze_size.1, q),
                    TaskKind::Spatialmap => gen_spatial_instance(seed, opts.objects, q),
                    TaskKind::Game24 => gen_game24_instance(seed, i >= opts.unsolvable),
                };
                match r {
                    Ok(inst) => return Ok(inst),
                    Err(e @ tracewarden_core::taskgen::GenError::Exhausted(_)) => last = Some(e),
                    Err(e) => return Err(e).context(format!("instance {i}")),
                }
            }
            Err(last.unwrap()).context(format!("instance {i}"))
        })
        .collect()
}

/// What the standalone verifier checks a trace against.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifyContextSpec {
    Instance(TaskInstance),
    Maze(String),
    Numbers(Vec<u64>),
    /// Spatial relations with no seeded map.
    Unseeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateLine {
    pub pass: bool,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub feedback: Option<String>,
}

pub fn build_binding(kind: TaskKind, ctx: &VerifyContextSpec) -> Result<Binding> {
    let payload = match ctx {
        VerifyContextSpec::Instance(inst) => {
            if inst.kind != kind {
                bail!("instance {} is {}, not {}", inst.id, inst.kind, kind);
            }
            Some(&inst.payload)
        }
        _ => None,
    };
    Ok(match kind {
        TaskKind::Maze => {
            let ascii = match (payload, ctx) {
                (Some(TaskPayload::Maze { ascii }), _) => ascii.as_str(),
                (_, VerifyContextSpec::Maze(a)) => a.as_str(),
                _ => bail!("maze traces need --maze or --instance-file"),
            };
            let grid = parse_maze(ascii).context("parsing maze")?;
            Binding::new("maze_steps", MazeExtractor::default(), "maze", MazeVerifier::new(grid), Policy::feedback())
        }
        TaskKind::Spatialmap => {
            let verifier = match payload {
                Some(TaskPayload::Spatial { relations, .. }) => SpatialVerifier::new(relations),
                _ => SpatialVerifier::unseeded(),
            };
            Binding::new("spatial_relations", SpatialExtractor::default(), "spatial", verifier, Policy::feedback())
        }
        TaskKind::Game24 => {
            let numbers: Vec<u64> = match (payload, ctx) {
                (Some(TaskPayload::Game24 { numbers }), _) => numbers.to_vec(),
                (_, VerifyContextSpec::Numbers(v)) => v.clone(),
                _ => bail!("game24 traces need --numbers or --instance-file"),
            };
            if numbers.len() != 4 {
                bail!("game24 needs exactly four numbers");
            }
            Binding::new("equations", EquationExtractor::new(&numbers), "game24", Game24Verifier::new(&numbers), Policy::feedback())
        }
    })
}

/// Verifies every state in `text`, in order, carrying verifier state across
/// states the way a monitored run would if it never intervened.
pub fn verify_trace(kind: TaskKind, ctx: &VerifyContextSpec, text: &str) -> Result<Vec<StateLine>> {
    let mut b = build_binding(kind, ctx)?;
    let states = b.extractor.scan(text, 0, true).states;
    let mut out = Vec::new();
    for s in states {
        let mut vctx = VerifyContext { session: None, body: text };
        let v = b.verifier.verify(&s, &mut vctx)?;
        let snippet = text[s.span.start..s.span.end].trim().replace('\n', " / ");
        out.push(StateLine { pass: v.pass, start: s.span.start, end: s.span.end, text: snippet, feedback: v.feedback });
    }
    Ok(out)
}

pub fn render_state_lines(lines: &[StateLine]) -> String {
    let mut s = String::new();
    for l in lines {
        let _ = writeln!(s, "{} [{}..{}] {}", if l.pass { "PASS" } else { "FAIL" }, l.start, l.end, l.text);
        if let Some(f) = l.feedback.as_deref().filter(|_| !l.pass) {
            let _ = writeln!(s, "    {}", f.trim());
        }
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    let _ = writeln!(s, "{} states, {} failed", lines.len(), failed);
    s
}

pub fn parse_numbers(s: &str) -> Result<Vec<u64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad number {t:?}")))
        .collect()
}

pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s.split_once(['x', 'X']).context("size must look like 9x9")?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}
