//! Generates one demonstration, annotates its keyframes and prints a training
//! record as it would appear in `prompts.jsonl`.
//!
//! cargo run --example export_training_prompts -- [task] [seed] [record]

use keyframe_memory::datagen::{annotate, export_prompts, generate_demo, validate_record, RuleSet};
use keyframe_memory::simenv::TaskKind;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let task: TaskKind = args.next().unwrap_or_else(|| "counting".into()).parse().map_err(anyhow::Error::msg)?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let pick: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);

    let demo = generate_demo(task, seed)?;
    let keyframes = annotate(&demo, &RuleSet::for_task(task))?;
    println!(
        "{} frames, {} segments, keyframes {:?}",
        demo.frames.len(),
        demo.segments().len(),
        keyframes.iter().map(|k| k.0).collect::<Vec<_>>()
    );
    let records = export_prompts(&demo, &keyframes, 8);
    let rec = records.get(pick).or(records.last()).expect("a demo has at least one decision");
    let line = rec.to_messages();
    validate_record(&line, 8)?;
    println!("{}", serde_json::to_string_pretty(&line)?);
    Ok(())
}
