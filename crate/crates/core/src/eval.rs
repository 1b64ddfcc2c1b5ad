//! Offline subtask-prediction metrics and online score tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Demonstration;
use crate::memory::{MemoryConfig, MemoryState, NominationBatch};
use crate::orchestrator::{EpisodeLog, Event};
use crate::policies::{HlContext, HlPolicy};
use crate::simenv::TaskScore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("traces differ in length ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("empty trace")]
    EmptyTrace,
    #[error("ground truth has no transitions")]
    NoTransitions,
    #[error("offline replay failed: {0}")]
    Replay(String),
}

/// Per-tick subtask labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionTrace {
    pub labels: Vec<String>,
}

impl<S: Into<String>> FromIterator<S> for PredictionTrace {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        PredictionTrace { labels: iter.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub half_width: usize,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec { half_width: 4 }
    }
}

impl BoundarySpec {
    /// Covers every tick of any trace.
    pub const UNBOUNDED: BoundarySpec = BoundarySpec { half_width: usize::MAX };
}

fn check(pred: &PredictionTrace, gt: &PredictionTrace) -> Result<(), EvalError> {
    if pred.labels.len() != gt.labels.len() {
        return Err(EvalError::LengthMismatch { pred: pred.labels.len(), gt: gt.labels.len() });
    }
    if gt.labels.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    Ok(())
}

pub fn trajectory_accuracy(pred: &PredictionTrace, gt: &PredictionTrace) -> Result<f64, EvalError> {
    check(pred, gt)?;
    let hits = pred.labels.iter().zip(&gt.labels).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.labels.len() as f64)
}

/// Ticks where the ground-truth label differs from the previous tick.
pub fn transitions(gt: &PredictionTrace) -> Vec<usize> {
    (1..gt.labels.len()).filter(|i| gt.labels[*i] != gt.labels[i - 1]).collect()
}

/// Union of `[τ − w, τ + w]` over all transitions, clamped to the trace.
pub fn boundary_ticks(gt: &PredictionTrace, spec: BoundarySpec) -> BTreeSet<usize> {
    let last = gt.labels.len().saturating_sub(1);
    let mut out = BTreeSet::new();
    for t in transitions(gt) {
        let lo = t.saturating_sub(spec.half_width);
        let hi = t.saturating_add(spec.half_width).min(last);
        out.extend(lo..=hi);
    }
    out
}

pub fn boundary_accuracy(pred: &PredictionTrace, gt: &PredictionTrace, spec: BoundarySpec) -> Result<f64, EvalError> {
    check(pred, gt)?;
    let ticks = boundary_ticks(gt, spec);
    if ticks.is_empty() {
        return Err(EvalError::NoTransitions);
    }
    let hits = ticks.iter().filter(|t| pred.labels[**t] == gt.labels[**t]).count();
    Ok(hits as f64 / ticks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub pred: PredictionTrace,
    pub gt: PredictionTrace,
    pub trajectory: f64,
    pub boundary: Option<f64>,
    pub boundary_spec: BoundarySpec,
}

/// Replays a demonstration's frames through `hl`, with its own memory, and
/// compares each decision with the subtask the demonstration executed then.
pub fn offline_eval(
    demo: &Demonstration,
    hl: &mut dyn HlPolicy,
    cfg: MemoryConfig,
    spec: BoundarySpec,
) -> Result<OfflineResult, EvalError> {
    let mut mem = MemoryState::new(cfg).map_err(|e| EvalError::Replay(e.to_string()))?;
    let mut text: Vec<String> = Vec::new();
    let mut pred = PredictionTrace::default();
    let mut gt = PredictionTrace::default();
    for t in &demo.ticks {
        let end = t.tick.0 as usize;
        let window = demo.frames[(end + 1).saturating_sub(cfg.window_len)..=end].to_vec();
        let selected = mem.selected_keyframes(t.tick);
        let ctx = HlContext {
            tick: t.tick,
            instruction: t.instruction.clone(),
            window,
            keyframes: selected.indices.iter().map(|i| demo.frames[i.0 as usize].clone()).collect(),
            text_memory: hl.uses_text_memory().then(|| text.clone()),
        };
        let d = hl.decide(&ctx).map_err(|e| EvalError::Replay(e.to_string()))?;
        let batch = NominationBatch::from_positions(t.tick, ctx.window.len(), d.nominations)
            .map_err(|e| EvalError::Replay(e.to_string()))?;
        mem.ingest(&batch).map_err(|e| EvalError::Replay(e.to_string()))?;
        let label = d.subtask.to_string();
        if text.last() != Some(&label) {
            text.push(label.clone());
        }
        pred.labels.push(label);
        gt.labels.push(t.subtask.to_string());
    }
    let trajectory = trajectory_accuracy(&pred, &gt)?;
    let boundary = match boundary_accuracy(&pred, &gt, spec) {
        Ok(b) => Some(b),
        Err(EvalError::NoTransitions) => None,
        Err(e) => return Err(e),
    };
    Ok(OfflineResult { pred, gt, trajectory, boundary, boundary_spec: spec })
}

/// Summed score components for one method.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub search_episodes: u32,
    pub counting_episodes: u32,
    pub dust_episodes: u32,
    pub retrieved: u32,
    pub optimal: u32,
    pub wrong_scoops: u32,
    pub dust_bottom: u32,
    pub dust_top: u32,
    pub replace_bottom: u32,
    pub replace_top: u32,
}

impl TableRow {
    pub fn add(&mut self, s: &TaskScore) {
        match *s {
            TaskScore::Search { retrieved, optimal } => {
                self.search_episodes += 1;
                self.retrieved += retrieved;
                self.optimal += optimal;
            }
            TaskScore::Counting { wrong_scoops } => {
                self.counting_episodes += 1;
                self.wrong_scoops += wrong_scoops;
            }
            TaskScore::Dust { dust_bottom, dust_top, replace_bottom, replace_top } => {
                self.dust_episodes += 1;
                self.dust_bottom += dust_bottom as u32;
                self.dust_top += dust_top as u32;
                self.replace_bottom += replace_bottom as u32;
                self.replace_top += replace_top as u32;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<TableRow>,
}

/// Groups scores by method, keeping first-seen method order.
pub fn report<'a>(episodes: impl IntoIterator<Item = (&'a str, TaskScore)>) -> Report {
    let mut rows: Vec<TableRow> = Vec::new();
    for (method, score) in episodes {
        let idx = match rows.iter().position(|r| r.method == method) {
            Some(i) => i,
            None => {
                rows.push(TableRow { method: method.to_string(), ..Default::default() });
                rows.len() - 1
            }
        };
        rows[idx].add(&score);
    }
    Report { rows }
}

/// `(method, score)` from a finished log.
pub fn log_outcome(log: &EpisodeLog) -> Option<(String, TaskScore)> {
    let method = match log.start()? {
        Event::EpisodeStart { hl, .. } => hl.clone(),
        _ => return None,
    };
    Some((method, log.final_score()?.1))
}

impl Report {
    pub fn to_text(&self) -> String {
        let header = [
            "method",
            "retrieved",
            "optimal",
            "wrong scoops",
            "dust bottom",
            "dust top",
            "replace bottom",
            "replace top",
        ];
        let cell = |n: u32, present: bool| if present { n.to_string() } else { "-".to_string() };
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for r in &self.rows {
            let (s, c, d) = (r.search_episodes > 0, r.counting_episodes > 0, r.dust_episodes > 0);
            table.push(vec![
                r.method.clone(),
                cell(r.retrieved, s),
                cell(r.optimal, s),
                cell(r.wrong_scoops, c),
                cell(r.dust_bottom, d),
                cell(r.dust_top, d),
                cell(r.replace_bottom, d),
                cell(r.replace_top, d),
            ]);
        }
        let widths: Vec<usize> =
            (0..header.len()).map(|i| table.iter().map(|row| row[i].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &table {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for (i, c) in row.iter().enumerate().skip(1) {
                let _ = write!(line, "  {:>w$}", c, w = widths[i]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}
