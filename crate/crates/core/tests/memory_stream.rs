use keyframe_memory::memory::{
    cluster_median, enforce_cap, single_linkage, FrameIndex, MemoryConfig, MemoryError, MemoryState, NominationBatch,
    NominationLog, SelectedKeyframes,
};
use proptest::prelude::*;

fn members(cs: impl IntoIterator<Item = keyframe_memory::memory::Cluster>) -> Vec<Vec<u64>> {
    cs.into_iter().map(|c| c.members().iter().map(|m| m.0).collect()).collect()
}

/// Naive reference: sort, then split wherever the gap exceeds `d`.
fn naive_groups(mut xs: Vec<u64>, d: u64) -> Vec<Vec<u64>> {
    xs.sort();
    let mut out: Vec<Vec<u64>> = Vec::new();
    for x in xs {
        match out.last_mut() {
            Some(g) if x - *g.last().unwrap() <= d => g.push(x),
            _ => out.push(vec![x]),
        }
    }
    out
}

/// (tick gap, nominated positions) per high-level tick.
fn stream() -> impl Strategy<Value = (u64, usize, Vec<(u64, Vec<usize>)>)> {
    (1u64..=10, 1usize..=12).prop_flat_map(|(d, n)| {
        let tick = (1u64..=3, prop::collection::vec(1usize..=n, 0..=3));
        (Just(d), Just(n), prop::collection::vec(tick, 1..=120))
    })
}

fn fold(d: u64, n: usize, ticks: &[(u64, Vec<usize>)]) -> (MemoryState, Vec<u64>, u64) {
    let cfg = MemoryConfig { merge_distance: d, window_len: n, cap: 64 };
    let mut mem = MemoryState::new(cfg).unwrap();
    let mut all = Vec::new();
    let mut t = n as u64;
    for (gap, pos) in ticks {
        t += gap;
        let batch = NominationBatch::from_positions(FrameIndex(t), n, pos.clone()).unwrap();
        all.extend(batch.abs_indices.iter().map(|i| i.0));
        mem.ingest(&batch).unwrap();
    }
    (mem, all, t)
}

proptest! {
    #[test]
    fn incremental_matches_batch_linkage((d, n, ticks) in stream()) {
        let (mem, all, _) = fold(d, n, &ticks);
        let batch = single_linkage(&NominationLog::from_unsorted(all.iter().copied().map(FrameIndex).collect()), d);
        prop_assert_eq!(members(mem.clusters().cloned()), members(batch));
        prop_assert_eq!(members(mem.clusters().cloned()), naive_groups(all, d));
    }

    #[test]
    fn frozen_clusters_never_change((d, n, ticks) in stream()) {
        let cfg = MemoryConfig { merge_distance: d, window_len: n, cap: 64 };
        let mut mem = MemoryState::new(cfg).unwrap();
        let mut t = n as u64;
        let mut seen_frozen: Vec<Vec<u64>> = Vec::new();
        for (gap, pos) in &ticks {
            t += gap;
            mem.ingest(&NominationBatch::from_positions(FrameIndex(t), n, pos.clone()).unwrap()).unwrap();
            let now = members(mem.frozen_clusters().iter().cloned());
            prop_assert!(now.starts_with(&seen_frozen));
            seen_frozen = now;
        }
    }

    #[test]
    fn selected_are_exited_medians_capped((d, n, ticks) in stream(), cap in 1usize..=6) {
        let (mem, all, t) = fold(d, n, &ticks);
        let start = t + 1 - n as u64;
        let medians: Vec<u64> = naive_groups(all, d).iter().map(|g| g[(g.len() - 1) / 2]).filter(|m| *m < start).collect();
        let got = mem.exited_representatives(FrameIndex(t));
        prop_assert_eq!(got.indices.iter().map(|i| i.0).collect::<Vec<_>>(), medians.clone());
        let (kept, evicted) = enforce_cap(got, cap);
        let split = medians.len().saturating_sub(cap);
        prop_assert_eq!(kept.indices.iter().map(|i| i.0).collect::<Vec<_>>(), medians[split..].to_vec());
        prop_assert_eq!(evicted.iter().map(|i| i.0).collect::<Vec<_>>(), medians[..split].to_vec());
    }

    #[test]
    fn median_is_lower_middle(mut xs in prop::collection::vec(0u64..100, 1..20)) {
        xs.sort();
        let m = cluster_median(&xs.iter().copied().map(FrameIndex).collect::<Vec<_>>()).unwrap();
        let below = xs.iter().filter(|x| **x < m.0).count();
        let at_or_below = xs.iter().filter(|x| **x <= m.0).count();
        prop_assert!(below < xs.len().div_ceil(2) && at_or_below >= xs.len().div_ceil(2));
    }
}

#[test]
fn worked_two_cluster_example() {
    let log = NominationLog::from_unsorted([1, 3, 3, 4, 10].map(FrameIndex).to_vec());
    let cs = single_linkage(&log, 5);
    assert_eq!(members(cs.clone()), vec![vec![1, 3, 3, 4], vec![10]]);
    assert_eq!(cs.iter().map(|c| c.median().0).collect::<Vec<_>>(), vec![3, 10]);
}

#[test]
fn pending_cluster_waits_for_window_exit() {
    let cfg = MemoryConfig::default();
    let mut mem = MemoryState::new(cfg).unwrap();
    mem.ingest(&NominationBatch::from_absolute(FrameIndex(10), vec![FrameIndex(9)]).unwrap()).unwrap();
    // window at tick 16 is [9, 16]
    assert!(mem.selected_keyframes(FrameIndex(16)).indices.is_empty());
    assert_eq!(mem.selected_keyframes(FrameIndex(17)).indices, vec![FrameIndex(9)]);
}

#[test]
fn ingest_rejects_bad_streams() {
    let mut mem = MemoryState::new(MemoryConfig::default()).unwrap();
    mem.ingest(&NominationBatch::empty(FrameIndex(20))).unwrap();
    assert!(matches!(mem.ingest(&NominationBatch::empty(FrameIndex(19))), Err(MemoryError::NonMonotonicTick { .. })));
    let future = NominationBatch { tick: FrameIndex(21), positions: vec![], abs_indices: vec![FrameIndex(22)] };
    assert!(matches!(mem.ingest(&future), Err(MemoryError::FutureIndex { .. })));
    assert!(MemoryState::new(MemoryConfig { window_len: 0, ..Default::default() }).is_err());
}

#[test]
fn cap_drops_oldest() {
    let k = SelectedKeyframes { indices: (0..5).map(FrameIndex).collect() };
    let (kept, evicted) = enforce_cap(k, 2);
    assert_eq!(kept.indices, vec![FrameIndex(3), FrameIndex(4)]);
    assert_eq!(evicted, vec![FrameIndex(0), FrameIndex(1), FrameIndex(2)]);
}
