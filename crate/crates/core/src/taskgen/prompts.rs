use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spatial::describe_map;
use super::{TaskInstance, TaskKind, TaskPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// No format instructions; the plain chain-of-thought baseline.
    Plain,
    /// Format exemplars that make intermediate states extractable.
    Stepwise,
    /// Tree-search proposer; `{path}` and `{n}` are filled in per node.
    Propose,
    /// Tree-search value prompt; `{path}` and `{state}` are filled in per candidate.
    Value,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 4] = [PromptStyle::Plain, PromptStyle::Stepwise, PromptStyle::Propose, PromptStyle::Value];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::Plain => "plain",
            PromptStyle::Stepwise => "stepwise",
            PromptStyle::Propose => "propose",
            PromptStyle::Value => "value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no {style:?} prompt template for {kind}")]
    Missing { kind: TaskKind, style: PromptStyle },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateSet {
    templates: BTreeMap<(TaskKind, PromptStyle), String>,
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/prompts/", $name, ".txt"))
    };
}

impl TemplateSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        use PromptStyle::*;
        use TaskKind::*;
        let entries = [
            (Maze, Plain, asset!("maze_plain")),
            (Maze, Stepwise, asset!("maze_stepwise")),
            (Maze, Propose, asset!("maze_propose")),
            (Maze, Value, asset!("maze_value")),
            (Spatialmap, Plain, asset!("spatialmap_plain")),
            (Spatialmap, Stepwise, asset!("spatialmap_stepwise")),
            (Spatialmap, Propose, asset!("spatialmap_propose")),
            (Spatialmap, Value, asset!("spatialmap_value")),
            (Game24, Plain, asset!("game24_plain")),
            (Game24, Stepwise, asset!("game24_stepwise")),
            (Game24, Propose, asset!("game24_propose")),
            (Game24, Value, asset!("game24_value")),
        ];
        let mut set = Self::default();
        for (k, s, t) in entries {
            set.insert(k, s, t);
        }
        set
    }

    pub fn insert(&mut self, kind: TaskKind, style: PromptStyle, template: &str) {
        self.templates.insert((kind, style), template.to_string());
    }

    pub fn get(&self, kind: TaskKind, style: PromptStyle) -> Result<&str, TemplateError> {
        self.templates.get(&(kind, style)).map(|s| s.as_str()).ok_or(TemplateError::Missing { kind, style })
    }

    /// Fills `{problem}`, `{question}` and `{options}`; other placeholders are left in place.
    pub fn render(&self, instance: &TaskInstance, style: PromptStyle) -> Result<String, TemplateError> {
        let t = self.get(instance.kind, style)?;
        Ok(t.replace("{problem}", &problem_text(instance))
            .replace("{question}", &instance.question)
            .replace("{options}", &options_text(instance)))
    }
}

fn problem_text(instance: &TaskInstance) -> String {
    match &instance.payload {
        TaskPayload::Maze { ascii } => ascii.clone(),
        TaskPayload::Spatial { entities, relations, .. } => describe_map(entities, relations),
        TaskPayload::Game24 { numbers } => {
            let n: Vec<String> = numbers.iter().map(|v| v.to_string()).collect();
            format!("Numbers: {}", n.join(" "))
        }
    }
}

fn options_text(instance: &TaskInstance) -> String {
    instance.options.iter().map(|c| format!("{}. {}", c.label, c.text)).collect::<Vec<_>>().join("\n")
}

/// Renders with the built-in templates.
pub fn render_metaprompt(instance: &TaskInstance, style: PromptStyle) -> Result<String, TemplateError> {
    TemplateSet::builtin().render(instance, style)
}
