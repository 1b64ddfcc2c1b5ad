use keyframe_memory::datagen::{
    annotate, annotate_segments, consistency_check, export_prompts, generate_demo, schema, segments, validate_record,
    write_dataset, AssistantPayload, DatagenError, RuleSet, Selector,
};
use keyframe_memory::memory::{FrameIndex, MemoryConfig};
use keyframe_memory::orchestrator::RunConfig;
use keyframe_memory::simenv::{SubtaskCommand, TaskKind};
use serde_json::Value;

const TASKS: [TaskKind; 3] = [TaskKind::Search, TaskKind::Counting, TaskKind::Dust];

fn labels(runs: &[(&str, usize)]) -> Vec<SubtaskCommand> {
    runs.iter().flat_map(|(l, n)| std::iter::repeat_n(l.parse().unwrap(), *n)).collect()
}

fn fi(v: &[u64]) -> Vec<FrameIndex> {
    v.iter().copied().map(FrameIndex).collect()
}

#[test]
fn search_fixture_keeps_last_look_frames() {
    let l = labels(&[
        ("look inside the left bin", 4),
        ("look inside the center bin", 3),
        ("take the eraser from the center bin and place it in the white bin", 5),
        ("look inside the right bin", 2),
    ]);
    let kf = annotate_segments(&segments(&l), &RuleSet::for_task(TaskKind::Search)).unwrap();
    assert_eq!(kf, fi(&[3, 6, 13]));
}

#[test]
fn counting_fixture_keeps_last_scoop_frames() {
    let l = labels(&[
        ("pick up the scooper", 3),
        ("place a scoop of peanuts in the blue bowl", 6),
        ("reset scooper position", 3),
        ("place a scoop of peanuts in the blue bowl", 6),
        ("reset scooper position", 3),
        ("drop the scooper", 3),
    ]);
    let kf = annotate_segments(&segments(&l), &RuleSet::for_task(TaskKind::Counting)).unwrap();
    assert_eq!(kf, fi(&[8, 17]));
}

#[test]
fn dust_fixture_skips_tool_handling() {
    let rules = RuleSet::for_task(TaskKind::Dust);
    assert_eq!(rules.selector(&"pick up duster".parse().unwrap()).unwrap(), Selector::None);
    assert_eq!(rules.selector(&"dust top shelf".parse().unwrap()).unwrap(), Selector::Last);
    let l = labels(&[
        ("remove the object on the bottom shelf", 2),
        ("pick up duster", 2),
        ("dust bottom shelf", 2),
        ("reset duster", 2),
        ("put down duster", 2),
    ]);
    let kf = annotate_segments(&segments(&l), &rules).unwrap();
    assert_eq!(kf, fi(&[1, 5]));
    let uncovered = labels(&[("look inside the left bin", 1)]);
    assert!(matches!(annotate_segments(&segments(&uncovered), &rules), Err(DatagenError::UncoveredLabel(_))));
}

#[test]
fn at_most_one_keyframe_per_segment() {
    for task in TASKS {
        let rules = RuleSet::for_task(task);
        for seed in 0..50 {
            let demo = generate_demo(task, seed).unwrap();
            let kf = annotate(&demo, &rules).unwrap();
            for s in demo.segments() {
                assert!(kf.iter().filter(|k| **k >= s.start && **k <= s.end).count() <= 1);
            }
        }
    }
}

#[test]
fn exported_records_validate_and_cover_reference_shapes() {
    let mut found = [false; 3];
    for task in TASKS {
        let rules = RuleSet::for_task(task);
        for seed in 0..50 {
            let demo = generate_demo(task, seed).unwrap();
            let kf = annotate(&demo, &rules).unwrap();
            for rec in export_prompts(&demo, &kf, 8) {
                let line = rec.to_messages();
                let payload = validate_record(&line, 8).unwrap();
                let images = line["messages"][1]["content"].as_array().unwrap().len() - 3;
                let full = rec.video_refs.len() == 8 && images > 0;
                let p = payload.keyframe_positions.as_slice();
                let s = payload.current_subtask.as_str();
                // decisions land on even frames, so a fresh keyframe sits at 7 only while the window fills
                found[0] |= s.starts_with("take the ") && p == [7];
                found[1] |= full && task == TaskKind::Counting && p.is_empty();
                found[2] |= rec.video_refs.len() == 8 && s == "remove the object on the top shelf" && p.len() == 1;
            }
        }
    }
    assert_eq!(found, [true; 3]);
}

#[test]
fn assistant_text_has_fixed_spacing() {
    let p = AssistantPayload { current_subtask: "reset scooper position".into(), keyframe_positions: vec![] };
    assert_eq!(p.to_text(), r#"{"current_subtask": "reset scooper position", "keyframe_positions": []}"#);
    let p = AssistantPayload { current_subtask: "dust top shelf".into(), keyframe_positions: vec![2, 7] };
    assert_eq!(p.to_text(), r#"{"current_subtask": "dust top shelf", "keyframe_positions": [2, 7]}"#);
}

#[test]
fn tampered_records_are_rejected() {
    let demo = generate_demo(TaskKind::Counting, 4).unwrap();
    let kf = annotate(&demo, &RuleSet::for_task(TaskKind::Counting)).unwrap();
    let line = export_prompts(&demo, &kf, 8)[12].to_messages();
    let edits: [fn(&mut Value); 5] = [
        |v| v["messages"][0]["role"] = "user".into(),
        |v| {
            v["messages"][2]["content"][0]["text"] = "{\"current_subtask\": \"fly\", \"keyframe_positions\": []}".into()
        },
        |v| {
            v["messages"][2]["content"][0]["text"] =
                "{\"current_subtask\": \"drop the scooper\", \"keyframe_positions\": [9]}".into()
        },
        |v| v["messages"][1]["content"][0]["text"] = "hello".into(),
        |v| v["extra"] = 1.into(),
    ];
    for edit in edits {
        let mut bad = line.clone();
        edit(&mut bad);
        assert!(matches!(validate_record(&bad, 8), Err(DatagenError::InvalidRecord(_))));
    }
    assert_eq!(schema()["$schema"], "http://json-schema.org/draft-07/schema#");
}

#[test]
fn ground_truth_nominations_reproduce_annotations() {
    for task in TASKS {
        let rules = RuleSet::for_task(task);
        for seed in 0..50 {
            let demo = generate_demo(task, seed).unwrap();
            let kf = annotate(&demo, &rules).unwrap();
            let (selected, exited) = consistency_check(&demo, &kf, MemoryConfig::default()).unwrap();
            assert_eq!(selected, exited, "{task:?} seed {seed}");
        }
    }
}

#[test]
fn dataset_writing_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = RunConfig::default();
    let ma = write_dataset(a.path(), TaskKind::Dust, &[3, 4], &cfg).unwrap();
    write_dataset(b.path(), TaskKind::Dust, &[3, 4], &cfg).unwrap();
    for f in ["prompts.jsonl", "frames.jsonl", "schema.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(a.path().join("prompts.jsonl")).unwrap();
    assert_eq!(text.lines().count(), ma.records);
    for line in text.lines() {
        validate_record(&serde_json::from_str(line).unwrap(), 8).unwrap();
    }
}
