use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;

use tracewarden_core::backend::SessionFactory;
use tracewarden_core::methods::{run_instance, MethodSpec, RunContext};
use tracewarden_core::metrics::{aggregate, select_sweep, MethodRow, RunRecord, SweepPoint, SweepSelection};
use tracewarden_core::monitor::{Clock, MonitorConfig, RunStatus};
use tracewarden_core::stopping::EntropyTracker;
use tracewarden_core::taskgen::{TaskInstance, TemplateSet};

use crate::config::RunConfig;
use crate::io::{read_log, LogWriter};

/// Wall clock started when the instance starts.
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for InstantClock {
    fn elapsed_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub total: usize,
    pub skipped: usize,
    pub ran: usize,
    pub failed: usize,
}

/// Runs every instance not yet in `log` and appends one record per instance.
pub fn run_experiment(cfg: &RunConfig, instances: &[TaskInstance], log: &Path) -> Result<RunSummary> {
    run_method(cfg, &cfg.method, instances, log)
}

pub fn run_method(cfg: &RunConfig, method: &MethodSpec, instances: &[TaskInstance], log: &Path) -> Result<RunSummary> {
    let done: BTreeSet<String> = read_log(log)?.into_iter().map(|r| r.instance_id).collect();
    let pending: Vec<&TaskInstance> = instances.iter().filter(|i| !done.contains(&i.id)).collect();
    let mut summary = RunSummary { total: instances.len(), skipped: instances.len() - pending.len(), ..Default::default() };
    info!("{}: {} to run, {} already logged", method.label(), pending.len(), summary.skipped);
    if pending.is_empty() {
        return Ok(summary);
    }
    let factory = cfg.factory()?;
    let judge = needs_judge(method).then(|| cfg.judge_factory()).transpose()?;
    let templates = cfg.templates()?;
    let mut writer = LogWriter::open(log)?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let workers = cfg.workers.min(pending.len());
    thread::scope(|s| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (factory, judge, templates, pending, next) = (&factory, &judge, &templates, &pending, &next);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(inst) = pending.get(i) else { break };
                let rec = run_one(cfg, method, inst, &**factory, judge.clone(), templates);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for rec in rx {
            summary.ran += 1;
            summary.failed += usize::from(rec.status == RunStatus::Failed);
            if let Some(e) = &rec.error {
                log::warn!("{}: {e}", rec.instance_id);
            }
            writer.append(&rec)?;
        }
        Ok(())
    })?;
    Ok(summary)
}

fn needs_judge(method: &MethodSpec) -> bool {
    use tracewarden_core::search::CriticKind;
    use tracewarden_core::stopping::EquivalenceMode;
    match method {
        MethodSpec::KStable { equivalence, .. } => *equivalence == EquivalenceMode::Pluggable,
        MethodSpec::BestOfK { critic, .. } | MethodSpec::MajorityVote { critic, .. } => *critic == CriticKind::LlmJudge,
        _ => false,
    }
}

fn run_one(
    cfg: &RunConfig,
    method: &MethodSpec,
    inst: &TaskInstance,
    factory: &dyn SessionFactory,
    judge: Option<Arc<dyn SessionFactory>>,
    templates: &TemplateSet,
) -> RunRecord {
    let clock = InstantClock::start();
    let ctx = RunContext {
        factory,
        templates,
        monitor: MonitorConfig { limits: cfg.limits, style: cfg.style.clone() },
        clock: &clock,
        judge,
        prompt_style: cfg.prompt_style,
        sample: cfg.sample,
        keep_trace: cfg.keep_traces,
    };
    run_instance(inst, method, &ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDimension {
    K,
    EatThreshold,
    DeerThreshold,
}

impl FromStr for SweepDimension {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "k" => SweepDimension::K,
            "eat_threshold" => SweepDimension::EatThreshold,
            "deer_threshold" => SweepDimension::DeerThreshold,
            _ => bail!("unknown sweep dimension {s:?}; expected k, eat_threshold or deer_threshold"),
        })
    }
}

impl SweepDimension {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDimension::K => "k",
            SweepDimension::EatThreshold => "eat_threshold",
            SweepDimension::DeerThreshold => "deer_threshold",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepDimension::K => vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 10.0, 15.0, 100.0],
            SweepDimension::EatThreshold => vec![0.2, 0.1, 0.04, 0.008, 0.005, 0.003, 0.001, 1e-4],
            SweepDimension::DeerThreshold => vec![0.85, 0.9, 0.93, 0.95, 0.97, 0.98, 0.99, 0.995],
        }
    }

    /// The method for one sweep value; other fields come from `base` when it
    /// is the same method.
    pub fn method(self, base: &MethodSpec, value: f64) -> Result<MethodSpec> {
        Ok(match self {
            SweepDimension::K => {
                if value < 1.0 || value.fract() != 0.0 || value > f64::from(u32::MAX) {
                    bail!("k must be a positive integer, got {value}");
                }
                let equivalence = match base {
                    MethodSpec::KStable { equivalence, .. } => *equivalence,
                    _ => Default::default(),
                };
                MethodSpec::KStable { k: value as u32, equivalence }
            }
            SweepDimension::EatThreshold => match base {
                MethodSpec::Eat { alpha, probe_suffix, .. } => {
                    MethodSpec::Eat { threshold: value, alpha: *alpha, probe_suffix: probe_suffix.clone() }
                }
                _ => MethodSpec::Eat {
                    threshold: value,
                    alpha: EntropyTracker::DEFAULT_ALPHA,
                    probe_suffix: tracewarden_core::stopping::DEFAULT_EAT_SUFFIX.into(),
                },
            },
            SweepDimension::DeerThreshold => match base {
                MethodSpec::Deer { aggregation, probe_suffix, .. } => {
                    MethodSpec::Deer { threshold: value, aggregation: *aggregation, probe_suffix: probe_suffix.clone() }
                }
                _ => MethodSpec::Deer {
                    threshold: value,
                    aggregation: Default::default(),
                    probe_suffix: tracewarden_core::stopping::DEFAULT_DEER_SUFFIX.into(),
                },
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub baseline: MethodRow,
    pub points: Vec<SweepPoint>,
    pub selection: SweepSelection,
    pub logs: Vec<PathBuf>,
}

/// Runs the baseline (unless a baseline log is configured) and each value,
/// logging under `out_dir`, then picks a value.
pub fn sweep(
    cfg: &RunConfig,
    instances: &[TaskInstance],
    dim: SweepDimension,
    values: &[f64],
    out_dir: &Path,
) -> Result<SweepResult> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let baseline_log = match &cfg.baseline_log {
        Some(p) => p.clone(),
        None => {
            let p = out_dir.join("baseline.jsonl");
            run_method(cfg, cfg.baseline.as_ref().unwrap_or(&MethodSpec::Cot), instances, &p)?;
            p
        }
    };
    let base_recs = read_log(&baseline_log)?;
    let base_row = aggregate(&base_recs, &base_recs)?.rows.remove(0);
    let mut points = Vec::new();
    let mut logs = Vec::new();
    for &v in values {
        let method = dim.method(&cfg.method, v)?;
        let log = out_dir.join(format!("{}-{v}.jsonl", dim.as_str()));
        run_method(cfg, &method, instances, &log)?;
        let recs = read_log(&log)?;
        let report = aggregate(&recs, &base_recs).with_context(|| format!("sweep value {v}"))?;
        let label = method.label();
        let row = report.rows.into_iter().find(|r| r.method == label).context("sweep log has no records for the method")?;
        points.push(SweepPoint { value: v, row });
        logs.push(log);
    }
    let selection = select_sweep(&base_row, &points);
    Ok(SweepResult { baseline: base_row, points, selection, logs })
}
