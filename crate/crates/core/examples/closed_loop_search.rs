//! One Object Search episode with and without long-term memory, printing the
//! committed subtasks and the final score.
//!
//! cargo run --example closed_loop_search -- [seed]

use keyframe_memory::orchestrator::{run_task, RunConfig};
use keyframe_memory::policies::FailureProfile;
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    for hl in ["oracle", "none"] {
        let cfg = RunConfig { seed, max_ticks: 80, ..RunConfig::default() };
        let ep = run_task(TaskKind::Search, hl.parse()?, FailureProfile::none(), &cfg)?;
        println!("== {hl}");
        let mut last = None;
        for (t_ms, tick, subtask) in ep.log.commits() {
            if last.as_ref() != Some(&subtask) {
                println!("{:>7} ms  tick {:>3}  {subtask}", t_ms, tick.0);
                last = Some(subtask);
            }
        }
        println!("{:?} {:?}\n", ep.status, ep.score);
    }
    Ok(())
}
