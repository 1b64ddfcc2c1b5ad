//! Window-only information checks.
//!
//! A decision is *blind* when some frame carrying information it depends on
//! lies before the recent window that ends at the decision tick. A policy that
//! sees only that window cannot make the decision reliably; one with long-term
//! memory can.

use serde::{Deserialize, Serialize};

use super::{DusterPose, Observation, ScooperPhase};
use crate::memory::FrameIndex;

/// A decision point and the frames whose content settles it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub tick: FrameIndex,
    pub evidence: Vec<FrameIndex>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub decisions: usize,
    /// Decision ticks whose window misses at least one evidence frame.
    pub blind: Vec<FrameIndex>,
    /// Largest number of evidence frames seen together in any window.
    pub max_evidence_in_window: usize,
}

impl HardnessReport {
    pub fn requires_memory(&self) -> bool {
        !self.blind.is_empty()
    }
}

fn window_start(tick: FrameIndex, n: usize) -> u64 {
    (tick.0 + 1).saturating_sub(n as u64)
}

/// Scans the window ending at every decision tick.
pub fn scan(decisions: &[Decision], n: usize) -> HardnessReport {
    let mut report = HardnessReport { decisions: decisions.len(), ..Default::default() };
    for d in decisions {
        let start = window_start(d.tick, n);
        let inside = d.evidence.iter().filter(|e| e.0 >= start && e.0 <= d.tick.0).count();
        report.max_evidence_in_window = report.max_evidence_in_window.max(inside);
        if inside < d.evidence.len() {
            report.blind.push(d.tick);
        }
    }
    report
}

/// Largest count of frames matching `pred` inside any length-`n` window.
pub fn max_in_any_window(frames: &[Observation], n: usize, pred: impl Fn(&Observation) -> bool) -> usize {
    let hits: Vec<u64> = frames.iter().filter(|o| pred(o)).map(|o| o.index.0).collect();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..hits.len() {
        while hits[hi] - hits[lo] >= n as u64 {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

/// For each instruction start `(tick, target)`, the latest earlier frame that
/// showed the target inside an open bin.
pub fn search_decisions(frames: &[Observation], starts: &[(FrameIndex, String)]) -> Vec<Decision> {
    starts
        .iter()
        .filter_map(|(tick, target)| {
            let seen = frames
                .iter()
                .rev()
                .filter(|o| o.index <= *tick)
                .filter(|o| o.search().and_then(|s| s.open_bin.as_ref()).is_some_and(|b| b.contents.contains(target)))
                .map(|o| o.index)
                .next()?;
            Some(Decision { tick: *tick, evidence: vec![seen] })
        })
        .collect()
}

/// Every idle-scooper frame after the first pour needs all pours so far.
pub fn counting_decisions(frames: &[Observation]) -> Vec<Decision> {
    let mut pours = Vec::new();
    let mut out = Vec::new();
    for o in frames {
        let Some(c) = o.counting() else { continue };
        if c.scoop_completed.is_some() {
            pours.push(o.index);
        }
        if c.scooper_held && c.scooper == ScooperPhase::Idle && !o.arm.busy && !pours.is_empty() {
            out.push(Decision { tick: o.index, evidence: pours.clone() });
        }
    }
    out
}

/// Dust choices at the hover pose depend on earlier strokes; placements
/// depend on where each object was removed from.
pub fn dust_decisions(frames: &[Observation]) -> Vec<Decision> {
    let mut strokes = Vec::new();
    let mut removals = Vec::new();
    let mut out = Vec::new();
    for o in frames {
        let Some(d) = o.dust() else { continue };
        if matches!(d.duster, DusterPose::Stroked(_)) {
            strokes.push(o.index);
        }
        if d.removed_from.is_some() {
            removals.push(o.index);
        }
        if d.duster == DusterPose::Neutral && !o.arm.busy && !strokes.is_empty() {
            out.push(Decision { tick: o.index, evidence: strokes.clone() });
        }
        let placing = !d.duster_held && !d.table.is_empty() && d.shelves.values().any(Option::is_none);
        if placing && strokes.len() >= 2 && !o.arm.busy {
            out.push(Decision { tick: o.index, evidence: removals.clone() });
        }
    }
    out
}
