//! Runs every high-level variant over a range of seeds and prints how often
//! each one solves each task perfectly.
//!
//! cargo run --release --example ablation_sweep -- [seeds] [ll-fail]

use keyframe_memory::orchestrator::{run_task, RunConfig};
use keyframe_memory::policies::{FailureProfile, HlSpec};
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let p: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    println!("{:<10} {:<9} {:>8} {:>10} {:>9}", "hl", "task", "perfect", "mean", "timeouts");
    for hl in ["oracle", "none", "short", "text", "noisy:2"] {
        let spec: HlSpec = hl.parse()?;
        for task in TaskKind::ALL {
            let (mut perfect, mut total, mut timeouts) = (0, 0u64, 0);
            for seed in 0..seeds {
                let cfg = RunConfig { seed, ..RunConfig::default() };
                let ep = run_task(task, spec, FailureProfile::uniform(p, seed), &cfg)?;
                perfect += ep.score.is_perfect() as u32;
                total += ep.score.total() as u64;
                timeouts += (ep.status != keyframe_memory::simenv::EpisodeStatus::Terminal) as u32;
            }
            println!(
                "{:<10} {:<9} {:>7}/{} {:>10.2} {:>9}",
                hl,
                task.name(),
                perfect,
                seeds,
                total as f64 / seeds as f64,
                timeouts
            );
        }
    }
    Ok(())
}
