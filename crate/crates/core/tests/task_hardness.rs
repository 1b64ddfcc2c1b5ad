use keyframe_memory::datagen::generate_demo;
use keyframe_memory::memory::FrameIndex;
use keyframe_memory::orchestrator::{run_task, RunConfig};
use keyframe_memory::policies::FailureProfile;
use keyframe_memory::simenv::hardness::{
    counting_decisions, dust_decisions, max_in_any_window, scan, search_decisions,
};
use keyframe_memory::simenv::{parse_search_instruction, EpisodeStatus, TaskKind, TaskScore};

fn search_starts(demo: &keyframe_memory::datagen::Demonstration) -> Vec<(FrameIndex, String)> {
    let mut out: Vec<(FrameIndex, String)> = Vec::new();
    for t in &demo.ticks {
        let target = parse_search_instruction(&t.instruction).unwrap();
        if out.last().is_none_or(|(_, last)| *last != target) {
            out.push((t.tick, target.to_string()));
        }
    }
    out
}

fn score(task: TaskKind, hl: &str, seed: u64) -> (EpisodeStatus, TaskScore) {
    let cfg = RunConfig { seed, max_ticks: 200, ..Default::default() };
    let ep = run_task(task, hl.parse().unwrap(), FailureProfile::none(), &cfg).unwrap();
    (ep.status, ep.score)
}

#[test]
fn counting_and_dust_always_need_memory() {
    for seed in 0..20 {
        let c = generate_demo(TaskKind::Counting, seed).unwrap();
        assert!(scan(&counting_decisions(&c.frames), 8).requires_memory(), "counting {seed}");
        // no window ever holds every pour
        assert!(max_in_any_window(&c.frames, 8, |o| o.counting().is_some_and(|s| s.scoop_completed.is_some())) < 2);
        let d = generate_demo(TaskKind::Dust, seed).unwrap();
        assert!(scan(&dust_decisions(&d.frames), 8).requires_memory(), "dust {seed}");
    }
}

#[test]
fn some_search_instances_need_memory_and_memoryless_misses_them() {
    let mut adversarial = 0;
    for seed in 0..30 {
        let demo = generate_demo(TaskKind::Search, seed).unwrap();
        let report = scan(&search_decisions(&demo.frames, &search_starts(&demo)), 8);
        if report.requires_memory() {
            adversarial += 1;
            let (_, s) = score(TaskKind::Search, "none", seed);
            let TaskScore::Search { optimal, .. } = s else { unreachable!() };
            assert!(optimal < 3, "seed {seed}: {s:?}");
        }
    }
    assert!(adversarial >= 5, "only {adversarial} adversarial instances");
}

#[test]
fn window_only_policies_fail_where_memory_succeeds() {
    for seed in 0..10 {
        for task in [TaskKind::Search, TaskKind::Counting, TaskKind::Dust] {
            let (status, s) = score(task, "oracle", seed);
            assert_eq!(status, EpisodeStatus::Terminal);
            assert!(s.is_perfect(), "{task:?} {seed}: {s:?}");
        }
        let (_, c) = score(TaskKind::Counting, "none", seed);
        assert!(matches!(c, TaskScore::Counting { wrong_scoops } if wrong_scoops >= 1));
        let (_, d) = score(TaskKind::Dust, "none", seed);
        assert!(matches!(d, TaskScore::Dust { dust_bottom, dust_top, .. } if !(dust_bottom && dust_top)));
    }
}
