//! Run records, per-method aggregation against a baseline, and sweep selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::RunStatus;
use crate::trace::{ActionKind, ReasoningTrace};
use crate::verdict::Span;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub span: Span,
    pub feedback: Option<String>,
    pub action: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub method: String,
    /// The extracted answer, or `NO_ANSWER`.
    pub final_answer: String,
    pub correct: bool,
    pub model_tokens: u64,
    pub injected_tokens: u64,
    #[serde(default)]
    pub interventions: Vec<InterventionRecord>,
    /// Present only for methods bound to an external verifier.
    #[serde(default)]
    pub sound: Option<bool>,
    pub status: RunStatus,
    pub wall_ms: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The final trace, kept for offline re-checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ReasoningTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub n: usize,
    pub accuracy_pct: f64,
    pub tokens_pct_of_baseline: f64,
    pub soundness_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub baseline: String,
    /// Baseline row first, then each method in name order.
    pub rows: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("method {method}: instance ids differ from the baseline (only in run: {only_in_run:?}; only in baseline: {only_in_baseline:?})")]
    IdMismatch { method: String, only_in_run: Vec<String>, only_in_baseline: Vec<String> },
    #[error("the baseline log is empty")]
    EmptyBaseline,
    #[error("the baseline log mixes methods: {0:?}")]
    MixedBaseline(Vec<String>),
}

/// Latest record per instance id.
fn dedup(records: &[RunRecord]) -> BTreeMap<&str, &RunRecord> {
    records.iter().map(|r| (r.instance_id.as_str(), r)).collect()
}

fn row(method: &str, recs: &BTreeMap<&str, &RunRecord>, baseline_tokens: u64) -> MethodRow {
    let n = recs.len();
    let correct = recs.values().filter(|r| r.correct).count();
    let tokens: u64 = recs.values().map(|r| r.model_tokens).sum();
    let with_sound: Vec<bool> = recs.values().filter_map(|r| r.sound).collect();
    let pct = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b * 100.0 };
    MethodRow {
        method: method.into(),
        n,
        accuracy_pct: pct(correct as f64, n as f64),
        tokens_pct_of_baseline: pct(tokens as f64, baseline_tokens as f64),
        soundness_pct: (!with_sound.is_empty())
            .then(|| pct(with_sound.iter().filter(|s| **s).count() as f64, with_sound.len() as f64)),
    }
}

/// One row per method in `run`, each measured against `baseline`.
pub fn aggregate(run: &[RunRecord], baseline: &[RunRecord]) -> Result<AggregateReport, AggregateError> {
    let base = dedup(baseline);
    if base.is_empty() {
        return Err(AggregateError::EmptyBaseline);
    }
    let base_methods: BTreeSet<&str> = baseline.iter().map(|r| r.method.as_str()).collect();
    if base_methods.len() > 1 {
        return Err(AggregateError::MixedBaseline(base_methods.into_iter().map(String::from).collect()));
    }
    let base_name = base_methods.into_iter().next().unwrap_or_default();
    let base_tokens: u64 = base.values().map(|r| r.model_tokens).sum();
    let mut rows = alloc::vec![row(base_name, &base, base_tokens)];
    let mut by_method: BTreeMap<&str, Vec<RunRecord>> = BTreeMap::new();
    for r in run {
        by_method.entry(r.method.as_str()).or_default().push(r.clone());
    }
    for (method, recs) in &by_method {
        let recs = dedup(recs);
        let ids: BTreeSet<&str> = recs.keys().copied().collect();
        let base_ids: BTreeSet<&str> = base.keys().copied().collect();
        if ids != base_ids {
            return Err(AggregateError::IdMismatch {
                method: String::from(*method),
                only_in_run: ids.difference(&base_ids).map(|s| String::from(*s)).collect(),
                only_in_baseline: base_ids.difference(&ids).map(|s| String::from(*s)).collect(),
            });
        }
        if *method != base_name {
            rows.push(row(method, &recs, base_tokens));
        }
    }
    Ok(AggregateReport { baseline: base_name.into(), rows })
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| String::from("-"), |v| format!("{v:.2}"))
}

/// Plain-text table with Accuracy % and Tokens % columns.
pub fn render_report(report: &AggregateReport) -> String {
    let width = report.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>10}  {:>8}  {:>11}  {:>5}\n", "Method", "Accuracy %", "Tokens %", "Soundness %", "n");
    for r in &report.rows {
        out.push_str(&format!(
            "{:<width$}  {:>10.2}  {:>8.2}  {:>11}  {:>5}\n",
            r.method,
            r.accuracy_pct,
            r.tokens_pct_of_baseline,
            opt_pct(r.soundness_pct),
            r.n
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionFlag {
    Selected,
    /// Several values reach the same lowest token use; the first is taken.
    Tie,
    /// No value keeps baseline accuracy; the baseline itself is the selection.
    BaselineEquivalent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub row: MethodRow,
}

impl SweepPoint {
    pub fn reduction_pct(&self) -> f64 {
        100.0 - self.row.tokens_pct_of_baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSelection {
    pub index: Option<usize>,
    pub value: Option<f64>,
    pub flag: SelectionFlag,
}

/// The value with the largest token reduction among those whose accuracy is at
/// least the baseline's.
pub fn select_sweep(baseline: &MethodRow, points: &[SweepPoint]) -> SweepSelection {
    const EPS: f64 = 1e-9;
    let eligible: Vec<usize> =
        (0..points.len()).filter(|&i| points[i].row.accuracy_pct + EPS >= baseline.accuracy_pct).collect();
    let Some(best) = eligible
        .iter()
        .copied()
        .min_by(|&a, &b| points[a].row.tokens_pct_of_baseline.total_cmp(&points[b].row.tokens_pct_of_baseline))
    else {
        return SweepSelection { index: None, value: None, flag: SelectionFlag::BaselineEquivalent };
    };
    let low = points[best].row.tokens_pct_of_baseline;
    let ties = eligible.iter().filter(|&&i| (points[i].row.tokens_pct_of_baseline - low).abs() <= EPS).count();
    SweepSelection {
        index: Some(best),
        value: Some(points[best].value),
        flag: if ties > 1 { SelectionFlag::Tie } else { SelectionFlag::Selected },
    }
}

/// Value / Acc. / Tokens / %Red table with the selection marked.
pub fn render_sweep(dimension: &str, baseline: &MethodRow, points: &[SweepPoint], sel: &SweepSelection) -> String {
    let mut out = format!("{:<12}  {:>7}  {:>8}  {:>7}\n", dimension, "Acc.", "Tokens", "%Red");
    out.push_str(&format!("{:<12}  {:>7.2}  {:>8.2}  {:>7}\n", "baseline", baseline.accuracy_pct, 100.0, "-"));
    for (i, p) in points.iter().enumerate() {
        let mark = if sel.index == Some(i) { " *" } else { "" };
        out.push_str(&format!(
            "{:<12}  {:>7.2}  {:>8.2}  {:>7.2}{mark}\n",
            format!("{}", p.value),
            p.row.accuracy_pct,
            p.row.tokens_pct_of_baseline,
            p.reduction_pct()
        ));
    }
    out.push_str(&format!("selection: {:?} ({:?})\n", sel.value, sel.flag));
    out
}
