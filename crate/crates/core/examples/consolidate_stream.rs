//! Streams nominations from a few high-level ticks into memory and prints,
//! after each tick, the clusters and the keyframes that have left the window.

use keyframe_memory::memory::{FrameIndex, MemoryConfig, MemoryState, NominationBatch};

fn main() -> anyhow::Result<()> {
    let cfg = MemoryConfig::default();
    let mut mem = MemoryState::new(cfg)?;
    // (tick, 1-indexed window positions)
    let stream: &[(u64, &[usize])] =
        &[(8, &[2, 4]), (10, &[2]), (12, &[]), (20, &[6, 7]), (22, &[5]), (30, &[]), (40, &[])];
    for &(tick, positions) in stream {
        let tick = FrameIndex(tick);
        let batch = NominationBatch::from_positions(tick, cfg.window_len_at(tick), positions.to_vec())?;
        mem.ingest(&batch)?;
        let clusters: Vec<String> = mem
            .clusters()
            .map(|c| {
                let m: Vec<String> = c.members().iter().map(|i| i.to_string()).collect();
                format!("{{{}}}{}", m.join(","), if c.frozen { "*" } else { "" })
            })
            .collect();
        let selected: Vec<u64> = mem.selected_keyframes(tick).indices.iter().map(|i| i.0).collect();
        println!(
            "tick {tick:>2}  nominated {:<8} clusters {:<24} keyframes {selected:?}",
            format!("{:?}", batch.abs_indices.iter().map(|i| i.0).collect::<Vec<_>>()),
            clusters.join(" ")
        );
    }
    println!("(* = frozen)");
    Ok(())
}
