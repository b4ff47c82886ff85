//! JSON run configuration and the things built from it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tracewarden_core::backend::{GenerationParams, MockFactory, MockScript, SessionFactory};
use tracewarden_core::methods::MethodSpec;
use tracewarden_core::monitor::MonitorLimits;
use tracewarden_core::taskgen::{PromptStyle, TaskKind, TemplateSet};
use tracewarden_core::trace::InterventionStyle;

use crate::http::{HttpFactory, HttpSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    /// A scripted mock; `script` is a JSON file.
    Mock { script: PathBuf },
    Http(HttpSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Qwen,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSpec {
    Preset(Preset),
    Explicit(GenerationParams),
}

impl Default for ParamsSpec {
    fn default() -> Self {
        ParamsSpec::Preset(Preset::Qwen)
    }
}

impl ParamsSpec {
    pub fn params(self) -> GenerationParams {
        match self {
            ParamsSpec::Preset(Preset::Qwen) => GenerationParams::qwen(),
            ParamsSpec::Preset(Preset::Phi) => GenerationParams::phi(),
            ParamsSpec::Explicit(p) => p,
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Instance file; `run --instances` overrides it.
    #[serde(default)]
    pub instances: Option<PathBuf>,
    pub backend: BackendSpec,
    #[serde(default)]
    pub params: ParamsSpec,
    pub method: MethodSpec,
    /// Backend for LLM judges and critics; defaults to `backend`.
    #[serde(default)]
    pub judge: Option<BackendSpec>,
    #[serde(default)]
    pub limits: MonitorLimits,
    #[serde(default)]
    pub style: InterventionStyle,
    #[serde(default)]
    pub prompt_style: Option<PromptStyle>,
    /// Directory of `<kind>_<style>.txt` files overriding the built-in prompts.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub sample: u32,
    #[serde(default = "yes")]
    pub keep_traces: bool,
    /// Method the sweep compares against; plain CoT when absent.
    #[serde(default)]
    pub baseline: Option<MethodSpec>,
    /// Existing baseline log for sweeps; run into the sweep directory when absent.
    #[serde(default)]
    pub baseline_log: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        self.limits.validate().map_err(anyhow::Error::msg)?;
        self.params.params().validate()?;
        Ok(())
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.instances.as_mut().map(fix);
        self.templates_dir.as_mut().map(fix);
        self.baseline_log.as_mut().map(fix);
        for b in std::iter::once(&mut self.backend).chain(self.judge.as_mut()) {
            if let BackendSpec::Mock { script } = b {
                fix(script);
            }
        }
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        let mut set = TemplateSet::builtin();
        let Some(dir) = &self.templates_dir else { return Ok(set) };
        for kind in [TaskKind::Maze, TaskKind::Spatialmap, TaskKind::Game24] {
            for style in PromptStyle::ALL {
                let file = dir.join(format!("{}_{}.txt", kind.as_str().to_lowercase(), style.as_str()));
                if file.exists() {
                    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                    set.insert(kind, style, &text);
                }
            }
        }
        Ok(set)
    }

    pub fn factory(&self) -> Result<Arc<dyn SessionFactory>> {
        build_factory(&self.backend, self.params.params())
    }

    pub fn judge_factory(&self) -> Result<Arc<dyn SessionFactory>> {
        build_factory(self.judge.as_ref().unwrap_or(&self.backend), self.params.params())
    }
}

pub fn load_mock_script(path: &Path) -> Result<MockScript> {
    let text = fs::read_to_string(path).with_context(|| format!("reading mock script {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing mock script {}", path.display()))
}

pub fn build_factory(spec: &BackendSpec, params: GenerationParams) -> Result<Arc<dyn SessionFactory>> {
    Ok(match spec {
        BackendSpec::Mock { script } => Arc::new(MockFactory::new(load_mock_script(script)?, params)?),
        BackendSpec::Http(settings) => Arc::new(HttpFactory::new(settings.resolve()?, params)?),
    })
}
