//! Streaming keyframe consolidation.
//!
//! Every high-level tick nominates a handful of frames from the recent window.
//! All nominations of an episode are pooled (duplicates kept) into a sorted
//! log, grouped by 1D single linkage with merge distance `d`, and each group
//! is represented by its median index. Only representatives that have left
//! the recent window are handed back to the policy.
//!
//! [`MemoryState`] keeps the result incrementally: clusters whose newest
//! member lies before `tick - N + 1 - d` can never absorb a future
//! nomination, so they are frozen and never re-linked.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an observation tick within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct FrameIndex(pub u64);

impl FrameIndex {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for FrameIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for FrameIndex {
    fn from(v: u64) -> Self {
        FrameIndex(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("position {position} outside window of length {window_len}")]
    PositionOutOfRange { position: usize, window_len: usize },
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("tick {tick} precedes previously ingested tick {last}")]
    NonMonotonicTick { tick: FrameIndex, last: FrameIndex },
    #[error("index {index} is newer than tick {tick}")]
    FutureIndex { index: FrameIndex, tick: FrameIndex },
    #[error("index {index} falls within merge distance of frozen cluster ending at {frozen_max}")]
    StaleIndex { index: FrameIndex, frozen_max: FrameIndex },
    #[error("invalid memory config: {0}")]
    InvalidConfig(&'static str),
}

/// Tunables for consolidation. Defaults: `d = 5`, `N = 8`, `cap = 8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub merge_distance: u64,
    pub window_len: usize,
    pub cap: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig { merge_distance: 5, window_len: 8, cap: 8 }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.window_len == 0 {
            return Err(MemoryError::InvalidConfig("window_len must be at least 1"));
        }
        if self.cap == 0 {
            return Err(MemoryError::InvalidConfig("cap must be at least 1"));
        }
        Ok(())
    }

    /// Length of the recent window presented at `tick`.
    pub fn window_len_at(&self, tick: FrameIndex) -> usize {
        let available = usize::try_from(tick.0.saturating_add(1)).unwrap_or(usize::MAX);
        self.window_len.min(available)
    }

    /// First frame of the recent window at `tick`.
    pub fn window_start(&self, tick: FrameIndex) -> FrameIndex {
        FrameIndex((tick.0 + 1).saturating_sub(self.window_len as u64))
    }
}

/// Converts 1-indexed window positions to absolute frame indices.
///
/// The window at `tick` spans `[tick - window_len + 1, tick]`, so position `p`
/// maps to `tick - window_len + p`.
pub fn rel_to_abs(tick: FrameIndex, window_len: usize, positions: &[usize]) -> Result<Vec<FrameIndex>, MemoryError> {
    let mut out = Vec::with_capacity(positions.len());
    for &p in positions {
        if p == 0 || p > window_len || window_len as u64 > tick.0 + 1 {
            return Err(MemoryError::PositionOutOfRange { position: p, window_len });
        }
        out.push(FrameIndex(tick.0 + p as u64 - window_len as u64));
    }
    out.sort_unstable();
    Ok(out)
}

/// Inverse of [`rel_to_abs`] for a single index; `None` when outside the window.
pub fn abs_to_rel(tick: FrameIndex, window_len: usize, index: FrameIndex) -> Option<usize> {
    let start = (tick.0 + 1).checked_sub(window_len as u64)?;
    if index.0 < start || index.0 > tick.0 {
        return None;
    }
    Some((index.0 - start) as usize + 1)
}

/// Nominations made at a single high-level tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominationBatch {
    pub tick: FrameIndex,
    pub positions: Vec<usize>,
    pub abs_indices: Vec<FrameIndex>,
}

impl NominationBatch {
    pub fn from_positions(tick: FrameIndex, window_len: usize, positions: Vec<usize>) -> Result<Self, MemoryError> {
        let abs_indices = rel_to_abs(tick, window_len, &positions)?;
        Ok(NominationBatch { tick, positions, abs_indices })
    }

    /// Builds a batch from absolute indices directly. Indices must not exceed `tick`.
    pub fn from_absolute(tick: FrameIndex, mut indices: Vec<FrameIndex>) -> Result<Self, MemoryError> {
        if let Some(&index) = indices.iter().find(|i| **i > tick) {
            return Err(MemoryError::FutureIndex { index, tick });
        }
        indices.sort_unstable();
        Ok(NominationBatch { tick, positions: Vec::new(), abs_indices: indices })
    }

    pub fn empty(tick: FrameIndex) -> Self {
        NominationBatch { tick, positions: Vec::new(), abs_indices: Vec::new() }
    }
}

/// Sorted multiset of every nominated index in an episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominationLog {
    entries: Vec<FrameIndex>,
}

impl NominationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_unsorted(mut entries: Vec<FrameIndex>) -> Self {
        entries.sort_unstable();
        NominationLog { entries }
    }

    pub fn entries(&self) -> &[FrameIndex] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges already-sorted indices into the log.
    fn extend_sorted(&mut self, sorted: &[FrameIndex]) {
        let Some(first) = sorted.first() else { return };
        let split = self.entries.partition_point(|e| e <= first);
        let tail = self.entries.split_off(split);
        let (mut a, mut b) = (tail.into_iter().peekable(), sorted.iter().copied().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(x), Some(y)) if x <= y => self.entries.push(a.next().unwrap()),
                (_, Some(_)) => self.entries.push(b.next().unwrap()),
                (Some(_), None) => self.entries.push(a.next().unwrap()),
                (None, None) => break,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    members: Vec<FrameIndex>,
    pub frozen: bool,
}

impl Cluster {
    /// Members must be sorted; returns `None` when empty.
    pub fn new(members: Vec<FrameIndex>) -> Option<Self> {
        if members.is_empty() {
            return None;
        }
        debug_assert!(members.windows(2).all(|w| w[0] <= w[1]));
        Some(Cluster { members, frozen: false })
    }

    pub fn members(&self) -> &[FrameIndex] {
        &self.members
    }

    pub fn min(&self) -> FrameIndex {
        self.members[0]
    }

    pub fn max(&self) -> FrameIndex {
        self.members[self.members.len() - 1]
    }

    pub fn median(&self) -> FrameIndex {
        // non-empty by construction
        self.members[(self.members.len() - 1) / 2]
    }
}

/// Groups a sorted multiset so that consecutive entries at most `d` apart share a cluster.
pub fn single_linkage(log: &NominationLog, d: u64) -> Vec<Cluster> {
    link_sorted(log.entries(), d)
}

fn link_sorted(entries: &[FrameIndex], d: u64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    let Some((&first, rest)) = entries.split_first() else { return clusters };
    let mut current = vec![first];
    let mut prev = first;
    for &idx in rest {
        if idx.0 - prev.0 <= d {
            current.push(idx);
        } else {
            clusters.push(Cluster { members: std::mem::take(&mut current), frozen: false });
            current.push(idx);
        }
        prev = idx;
    }
    clusters.push(Cluster { members: current, frozen: false });
    clusters
}

/// Lower median: sorted position `ceil(k / 2)`, 1-indexed.
pub fn cluster_median(members: &[FrameIndex]) -> Result<FrameIndex, MemoryError> {
    if members.is_empty() {
        return Err(MemoryError::EmptyCluster);
    }
    Ok(members[(members.len() - 1) / 2])
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedKeyframes {
    pub indices: Vec<FrameIndex>,
}

/// Drops the oldest representatives until at most `cap` remain.
/// Returns the kept set and the evicted indices.
pub fn enforce_cap(k: SelectedKeyframes, cap: usize) -> (SelectedKeyframes, Vec<FrameIndex>) {
    let cap = cap.max(1);
    let mut indices = k.indices;
    if indices.len() <= cap {
        return (SelectedKeyframes { indices }, Vec::new());
    }
    let kept = indices.split_off(indices.len() - cap);
    (SelectedKeyframes { indices: kept }, indices)
}

/// Incremental clustering state for a single episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    cfg: MemoryConfig,
    log: NominationLog,
    frozen: Vec<Cluster>,
    active: Vec<Cluster>,
    last_tick: Option<FrameIndex>,
}

impl MemoryState {
    pub fn new(cfg: MemoryConfig) -> Result<Self, MemoryError> {
        cfg.validate()?;
        Ok(MemoryState { cfg, log: NominationLog::new(), frozen: Vec::new(), active: Vec::new(), last_tick: None })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.cfg
    }

    pub fn log(&self) -> &NominationLog {
        &self.log
    }

    pub fn frozen_clusters(&self) -> &[Cluster] {
        &self.frozen
    }

    pub fn active_clusters(&self) -> &[Cluster] {
        &self.active
    }

    pub fn last_tick(&self) -> Option<FrameIndex> {
        self.last_tick
    }

    /// Frozen clusters followed by active ones, in index order.
    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.frozen.iter().chain(self.active.iter())
    }

    pub fn ingest(&mut self, batch: &NominationBatch) -> Result<(), MemoryError> {
        if let Some(last) = self.last_tick {
            if batch.tick < last {
                return Err(MemoryError::NonMonotonicTick { tick: batch.tick, last });
            }
        }
        let mut incoming = batch.abs_indices.clone();
        incoming.sort_unstable();
        if let Some(&index) = incoming.iter().find(|i| **i > batch.tick) {
            return Err(MemoryError::FutureIndex { index, tick: batch.tick });
        }
        if let (Some(frozen), Some(&lowest)) = (self.frozen.last(), incoming.first()) {
            if lowest.0 <= frozen.max().0 + self.cfg.merge_distance {
                return Err(MemoryError::StaleIndex { index: lowest, frozen_max: frozen.max() });
            }
        }
        self.last_tick = Some(batch.tick);

        if !incoming.is_empty() {
            self.log.extend_sorted(&incoming);
            let d = self.cfg.merge_distance;
            for &x in &incoming {
                // linkage only ever merges: join the first reachable cluster, then absorb neighbours it now reaches
                let i = self.active.partition_point(|c| c.max().0 + d < x.0);
                if i < self.active.len() && self.active[i].min().0 <= x.0 + d {
                    let c = &mut self.active[i];
                    let at = c.members.partition_point(|m| *m <= x);
                    c.members.insert(at, x);
                    while i + 1 < self.active.len() && self.active[i + 1].min().0 <= self.active[i].max().0 + d {
                        let next = self.active.remove(i + 1);
                        self.active[i].members.extend(next.members);
                    }
                } else {
                    self.active.insert(i, Cluster { members: vec![x], frozen: false });
                }
            }
        }

        // cluster ends before tick - N + 1 - d ⇒ no later nomination can reach it
        let horizon = (batch.tick.0 + 1).checked_sub(self.cfg.window_len as u64 + self.cfg.merge_distance);
        if let Some(horizon) = horizon {
            let n_freeze = self.active.iter().take_while(|c| c.max().0 < horizon).count();
            for mut c in self.active.drain(..n_freeze) {
                c.frozen = true;
                self.frozen.push(c);
            }
        }
        Ok(())
    }

    /// Representatives that have exited the window at `tick`, before the cap.
    pub fn exited_representatives(&self, tick: FrameIndex) -> SelectedKeyframes {
        let start = self.cfg.window_start(tick);
        let indices = self.clusters().map(Cluster::median).filter(|m| *m < start).collect();
        SelectedKeyframes { indices }
    }

    /// Keyframes presented at `tick`, together with any indices dropped by the cap.
    pub fn select(&self, tick: FrameIndex) -> (SelectedKeyframes, Vec<FrameIndex>) {
        enforce_cap(self.exited_representatives(tick), self.cfg.cap)
    }

    pub fn selected_keyframes(&self, tick: FrameIndex) -> SelectedKeyframes {
        self.select(tick).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fi(v: &[u64]) -> Vec<FrameIndex> {
        v.iter().copied().map(FrameIndex).collect()
    }

    fn members(cs: &[Cluster]) -> Vec<Vec<u64>> {
        cs.iter().map(|c| c.members().iter().map(|m| m.0).collect()).collect()
    }

    #[test]
    fn rel_to_abs_examples() {
        assert_eq!(rel_to_abs(FrameIndex(10), 8, &[8]).unwrap(), fi(&[10]));
        // window [3..=10]
        let window: Vec<u64> = (3..=10).collect();
        assert_eq!(rel_to_abs(FrameIndex(10), 8, &[1]).unwrap(), fi(&[window[0]]));
        assert_eq!(rel_to_abs(FrameIndex(10), 8, &[7]).unwrap(), fi(&[9]));
        assert_eq!(rel_to_abs(FrameIndex(10), 8, &[8, 2, 5]).unwrap(), fi(&[4, 7, 10]));
    }

    #[test]
    fn rel_to_abs_rejects_out_of_range() {
        assert!(matches!(rel_to_abs(FrameIndex(10), 8, &[0]), Err(MemoryError::PositionOutOfRange { .. })));
        assert!(matches!(rel_to_abs(FrameIndex(10), 8, &[9]), Err(MemoryError::PositionOutOfRange { .. })));
        // startup: only 3 frames exist at tick 2
        assert!(rel_to_abs(FrameIndex(2), 8, &[1]).is_err());
        assert_eq!(rel_to_abs(FrameIndex(2), 3, &[1, 3]).unwrap(), fi(&[0, 2]));
    }

    #[test]
    fn abs_rel_inverse() {
        for tick in 0..30u64 {
            let cfg = MemoryConfig::default();
            let len = cfg.window_len_at(FrameIndex(tick));
            for p in 1..=len {
                let abs = rel_to_abs(FrameIndex(tick), len, &[p]).unwrap()[0];
                assert_eq!(abs_to_rel(FrameIndex(tick), len, abs), Some(p));
            }
        }
    }

    #[test]
    fn linkage_on_two_cluster_example() {
        let log = NominationLog::from_unsorted(fi(&[3, 1, 10, 4, 3]));
        let cs = single_linkage(&log, 5);
        assert_eq!(members(&cs), vec![vec![1, 3, 3, 4], vec![10]]);
        assert_eq!(cs[0].median(), FrameIndex(3));
        assert_eq!(cs[1].median(), FrameIndex(10));
    }

    #[test]
    fn linkage_empty_and_zero_distance() {
        assert!(single_linkage(&NominationLog::new(), 5).is_empty());
        let cs = single_linkage(&NominationLog::from_unsorted(fi(&[2, 2, 3])), 0);
        assert_eq!(members(&cs), vec![vec![2, 2], vec![3]]);
    }

    #[test]
    fn median_rules() {
        assert_eq!(cluster_median(&fi(&[1, 3, 3, 4])).unwrap(), FrameIndex(3));
        assert_eq!(cluster_median(&fi(&[10])).unwrap(), FrameIndex(10));
        assert_eq!(cluster_median(&fi(&[2, 4])).unwrap(), FrameIndex(2));
        assert_eq!(cluster_median(&[]), Err(MemoryError::EmptyCluster));
    }

    #[test]
    fn cap_drops_oldest() {
        let k = SelectedKeyframes { indices: fi(&[1, 5, 9, 13, 17, 21, 25, 29, 33]) };
        let (kept, evicted) = enforce_cap(k, 8);
        assert_eq!(kept.indices, fi(&[5, 9, 13, 17, 21, 25, 29, 33]));
        assert_eq!(evicted, fi(&[1]));

        let eight = SelectedKeyframes { indices: fi(&[1, 2, 3, 4, 5, 6, 7, 8]) };
        assert_eq!(enforce_cap(eight.clone(), 8).0, eight);
        assert_eq!(enforce_cap(SelectedKeyframes::default(), 8).0.indices, vec![]);
    }

    #[test]
    fn empty_batch_only_advances_tick() {
        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(4), fi(&[2])).unwrap()).unwrap();
        let before = (m.log().clone(), m.clusters().cloned().collect::<Vec<_>>());
        m.ingest(&NominationBatch::empty(FrameIndex(6))).unwrap();
        assert_eq!(m.last_tick(), Some(FrameIndex(6)));
        assert_eq!(before, (m.log().clone(), m.clusters().cloned().collect::<Vec<_>>()));
    }

    #[test]
    fn freeze_trace() {
        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(9), fi(&[1, 3])).unwrap()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(10), fi(&[3, 4])).unwrap()).unwrap();
        // horizon at t=10 is 10 - 8 + 1 - 5 < 0: nothing frozen yet
        assert!(m.frozen_clusters().is_empty());
        assert_eq!(members(m.active_clusters()), vec![vec![1, 3, 3, 4]]);
        m.ingest(&NominationBatch::from_absolute(FrameIndex(20), fi(&[10])).unwrap()).unwrap();
        // horizon 8 > 4
        assert_eq!(members(m.frozen_clusters()), vec![vec![1, 3, 3, 4]]);
        assert!(m.frozen_clusters()[0].frozen);
        assert_eq!(members(m.active_clusters()), vec![vec![10]]);
    }

    #[test]
    fn freeze_boundary_is_strict() {
        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(4), fi(&[4])).unwrap()).unwrap();
        // tick 16: horizon = 16 - 12 = 4, max 4 is not < 4
        m.ingest(&NominationBatch::empty(FrameIndex(16))).unwrap();
        assert!(m.frozen_clusters().is_empty());
        m.ingest(&NominationBatch::empty(FrameIndex(17))).unwrap();
        assert_eq!(m.frozen_clusters().len(), 1);
    }

    #[test]
    fn selection_examples() {
        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(10), fi(&[1, 3, 3, 4, 10])).unwrap()).unwrap();
        assert_eq!(m.selected_keyframes(FrameIndex(20)).indices, fi(&[3, 10]));
        // window at 12 is [5..=12]; median 10 is still pending
        assert_eq!(m.selected_keyframes(FrameIndex(12)).indices, fi(&[3]));
        let empty = MemoryState::new(MemoryConfig::default()).unwrap();
        assert!(empty.selected_keyframes(FrameIndex(40)).indices.is_empty());
    }

    #[test]
    fn rejects_bad_ticks_and_indices() {
        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::empty(FrameIndex(10))).unwrap();
        assert!(matches!(m.ingest(&NominationBatch::empty(FrameIndex(9))), Err(MemoryError::NonMonotonicTick { .. })));
        assert!(NominationBatch::from_absolute(FrameIndex(3), fi(&[4])).is_err());

        let mut m = MemoryState::new(MemoryConfig::default()).unwrap();
        m.ingest(&NominationBatch::from_absolute(FrameIndex(2), fi(&[2])).unwrap()).unwrap();
        m.ingest(&NominationBatch::empty(FrameIndex(30))).unwrap();
        assert_eq!(m.frozen_clusters().len(), 1);
        let late = NominationBatch::from_absolute(FrameIndex(30), fi(&[6])).unwrap();
        assert!(matches!(m.ingest(&late), Err(MemoryError::StaleIndex { .. })));
    }

    #[test]
    fn invalid_configs() {
        assert!(MemoryState::new(MemoryConfig { cap: 0, ..Default::default() }).is_err());
        assert!(MemoryState::new(MemoryConfig { window_len: 0, ..Default::default() }).is_err());
    }
}
