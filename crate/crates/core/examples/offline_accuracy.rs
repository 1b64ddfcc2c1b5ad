//! Scores each high-level variant against oracle demonstrations offline:
//! trajectory accuracy over every decision and boundary accuracy near subtask
//! changes.
//!
//! Subtasks here last only a few decisions, so the default half-width of 4
//! covers nearly every tick; pass a smaller one to focus on the transitions.
//!
//! cargo run --release --example offline_accuracy -- [demos-per-task] [boundary-w]

use keyframe_memory::datagen::generate_demo;
use keyframe_memory::eval::{offline_eval, BoundarySpec};
use keyframe_memory::memory::MemoryConfig;
use keyframe_memory::policies::HlSpec;
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let w: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(BoundarySpec::default().half_width);
    let spec_w = BoundarySpec { half_width: w };
    println!("{:<9} {:<8} {:>10} {:>9}", "task", "hl", "trajectory", format!("bound±{w}"));
    for task in TaskKind::ALL {
        let demos = (0..n).map(|s| generate_demo(task, s)).collect::<Result<Vec<_>, _>>()?;
        for hl in ["oracle", "none", "short", "text", "noisy:2"] {
            let spec: HlSpec = hl.parse()?;
            let (mut traj, mut bound, mut counted) = (0.0, 0.0, 0);
            for d in &demos {
                let r = offline_eval(d, spec.build(d.seed).as_mut(), MemoryConfig::default(), spec_w)?;
                traj += r.trajectory;
                if let Some(b) = r.boundary {
                    bound += b;
                    counted += 1;
                }
            }
            println!("{:<9} {:<8} {:>10.3} {:>9.3}", task.name(), hl, traj / n as f64, bound / counted.max(1) as f64);
        }
    }
    Ok(())
}
