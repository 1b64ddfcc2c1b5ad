//! Runs an episode with failure injection, writes its log, reads it back and
//! re-executes the recorded actions to confirm the final state.

use std::io::BufReader;

use keyframe_memory::orchestrator::{replay_actions, rerun, run_task, EpisodeLog, RunConfig};
use keyframe_memory::policies::FailureProfile;
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig { seed: 11, ..RunConfig::default() };
    let ep = run_task(TaskKind::Dust, "oracle".parse()?, FailureProfile::uniform(0.2, cfg.seed), &cfg)?;
    let path = std::env::temp_dir().join("kfm-replay-example.jsonl");
    ep.log.write_jsonl(std::fs::File::create(&path)?)?;

    let log = EpisodeLog::read_jsonl(BufReader::new(std::fs::File::open(&path)?))?;
    let report = replay_actions(&log)?;
    println!("{} records -> {}", log.records.len(), path.display());
    println!("{} actions replayed; digests match: {}", report.actions, report.matches());
    println!("rerun reproduces the log byte for byte: {}", rerun(&log)?.to_jsonl() == log.to_jsonl());
    Ok(())
}
