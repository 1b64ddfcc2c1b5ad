//! Drives the same schedule against the wall clock, sped up, so the dual-rate
//! timing can be watched live.
//!
//! cargo run --example realtime_driver -- [speed]

use std::time::Instant;

use keyframe_memory::orchestrator::{run_task_paced, RunConfig, WallClock};
use keyframe_memory::policies::FailureProfile;
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let speed: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20.0);
    let cfg = RunConfig { seed: 1, ..RunConfig::default() };
    let start = Instant::now();
    let ep = run_task_paced(
        TaskKind::Counting,
        "oracle".parse()?,
        FailureProfile::none(),
        &cfg,
        &mut WallClock::new(speed),
    )?;
    let virtual_ms = ep.log.records.last().map_or(0, |r| r.t_ms);
    println!(
        "{:?} {:?}: {} ms of episode time in {:.2} s at {speed}x",
        ep.status,
        ep.score,
        virtual_ms,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
