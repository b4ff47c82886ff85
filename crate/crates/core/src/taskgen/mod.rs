//! Seeded task instances with gold answers, and the prompts that present them.

mod game24;
mod maze;
mod prompts;
mod spatial;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{AnswerExtractor, EquationExtractor};
use crate::maze::MazeQuestion;
use crate::spatial::{DiagRelation, Diagonal};
use crate::trace::END_THINK;

pub use game24::gen_game24_instance;
pub use maze::{gen_maze_instance, MAZE_MIN_SIDE};
pub use prompts::{render_metaprompt, PromptStyle, TemplateError, TemplateSet};
pub use spatial::{gen_spatial_instance, ENTITY_NAMES, MAX_OBJECTS, MIN_OBJECTS};

/// Answer text for runs that produced nothing extractable.
pub const NO_ANSWER: &str = "NO_ANSWER";
/// Phrase a Game-of-24 answer uses to claim there is no solution.
pub const NO_SOLUTION: &str = "no solution";

pub const LABELS: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskKind {
    Maze,
    Spatialmap,
    #[serde(rename = "GAME24")]
    Game24,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Maze => "maze",
            TaskKind::Spatialmap => "spatialmap",
            TaskKind::Game24 => "game24",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "maze" => Ok(TaskKind::Maze),
            "spatialmap" | "spatial" => Ok(TaskKind::Spatialmap),
            "game24" | "gameof24" => Ok(TaskKind::Game24),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    RightTurns,
    TotalTurns,
    RelativePosition,
    /// Direction of one object relative to another.
    Q0,
    /// Which object lies in a diagonal of an anchor.
    Q1,
    /// How many objects lie in a diagonal of an anchor.
    Q2,
    Make24,
}

impl QuestionKind {
    pub fn maze(self) -> Option<MazeQuestion> {
        match self {
            QuestionKind::RightTurns => Some(MazeQuestion::RightTurns),
            QuestionKind::TotalTurns => Some(MazeQuestion::TotalTurns),
            QuestionKind::RelativePosition => Some(MazeQuestion::RelativePosition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpatialQuery {
    Direction { subject: String, object: String },
    Which { dir: Diagonal, anchor: String },
    Count { dir: Diagonal, anchor: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskPayload {
    Maze { ascii: String },
    Spatial { entities: Vec<String>, relations: Vec<DiagRelation>, query: SpatialQuery },
    Game24 { numbers: [u64; 4] },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Gold {
    Label { label: String },
    Game24 { solvable: bool, witness: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub payload: TaskPayload,
    pub question_kind: QuestionKind,
    pub question: String,
    #[serde(default)]
    pub options: Vec<Choice>,
    pub gold: Gold,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generation parameters: {0}")]
    Parameters(String),
    #[error("no instance found after {0} attempts")]
    Exhausted(u32),
    #[error("question kind {0:?} does not apply to this task")]
    WrongQuestion(QuestionKind),
    #[error("instance payload is inconsistent: {0}")]
    Payload(String),
}

/// Shuffles `gold` in among `distractors` and labels the four choices A-D.
fn labeled_options(rng: &mut ChaCha8Rng, gold: String, distractors: Vec<String>) -> (Vec<Choice>, String) {
    let mut texts = distractors;
    texts.push(gold.clone());
    texts.shuffle(rng);
    let options: Vec<Choice> =
        texts.iter().zip(LABELS).map(|(t, l)| Choice { label: l.to_string(), text: t.clone() }).collect();
    let label = options.iter().find(|c| c.text == gold).map(|c| c.label.clone()).unwrap_or_default();
    (options, label)
}

/// Body text where a final answer is looked for: after the last end-of-thinking
/// marker when there is one.
pub fn answer_region(body: &str) -> &str {
    match body.rfind(END_THINK) {
        Some(i) => &body[i + END_THINK.len()..],
        None => body,
    }
}

impl TaskInstance {
    pub fn option_pairs(&self) -> Vec<(String, String)> {
        self.options.iter().map(|c| (c.label.clone(), c.text.clone())).collect()
    }

    pub fn numbers(&self) -> Option<[u64; 4]> {
        match self.payload {
            TaskPayload::Game24 { numbers } => Some(numbers),
            _ => None,
        }
    }

    /// Final answer read from a trace body: an option label, a Game-of-24
    /// expression, [`NO_SOLUTION`], or `None`.
    pub fn read_answer(&self, body: &str) -> Option<String> {
        let tail = answer_region(body);
        match self.numbers() {
            Some(n) => {
                let ex = EquationExtractor::new(&n);
                ex.extract_latest(tail, 0)
                    .or_else(|| ex.extract_latest(body, 0))
                    .map(|(e, _)| e)
                    .or_else(|| tail.to_ascii_lowercase().contains(NO_SOLUTION).then(|| NO_SOLUTION.to_string()))
            }
            None => {
                let ex = AnswerExtractor::with_options(self.option_pairs());
                ex.extract_latest(tail, 0).or_else(|| ex.extract_latest(body, 0)).map(|(l, _)| l)
            }
        }
    }

    pub fn is_correct(&self, answer: Option<&str>) -> bool {
        let Some(answer) = answer else { return false };
        match &self.gold {
            Gold::Label { label } => answer == label,
            Gold::Game24 { solvable: true, .. } => {
                let n = self.numbers().unwrap_or_default();
                crate::game24::verify_game24(answer, &n).pass
            }
            Gold::Game24 { solvable: false, .. } => answer == NO_SOLUTION,
        }
    }

    /// Gold answer recomputed from the payload alone by the task's oracle.
    pub fn recompute_gold(&self) -> Result<Gold, GenError> {
        match (&self.payload, self.kind) {
            (TaskPayload::Maze { ascii }, TaskKind::Maze) => maze::recompute(self, ascii),
            (TaskPayload::Spatial { entities, relations, query }, TaskKind::Spatialmap) => {
                spatial::recompute(self, entities, relations, query)
            }
            (TaskPayload::Game24 { numbers }, TaskKind::Game24) => Ok(game24::recompute(*numbers)),
            _ => Err(GenError::Payload("payload does not match the task kind".into())),
        }
    }

    fn label_of(&self, text: &str) -> Result<Gold, GenError> {
        self.options
            .iter()
            .find(|c| c.text == text)
            .map(|c| Gold::Label { label: c.label.clone() })
            .ok_or_else(|| GenError::Payload(format!("no option reads {text:?}")))
    }
}

#[cfg(test)]
mod tests;
