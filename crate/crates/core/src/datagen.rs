//! Demonstrations, keyframe annotation and training-prompt export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::memory::{FrameIndex, MemoryConfig, MemoryError, MemoryState, NominationBatch};
use crate::orchestrator::{run_task, EpisodeLog, Event, OrchestratorError, RunConfig};
use crate::policies::{FailureProfile, HlSpec, Variant};
use crate::simenv::{Observation, SubtaskCommand, TaskKind, TaskScore};

pub const SYSTEM_TEXT: &str = "You are a robot program that predicts actions. The video input from the egocentric camera shows the most recent actions the robot has executed. The images are selected frames of particular importance from all the actions the robot has executed so far. Based on these, output the current subtask the robot should execute and nothing else.\n\nReturn a JSON with:\n- current_subtask: the action that should be executed at the current timestep\n- keyframe_positions: list of frame positions (1-indexed) from the video input where actions change\n";
const TASK_PREFIX: &str = "Task: What subtask should the robot execute to ";
const MEMORY_TEXT: &str =
    "?\nHere are the selected frames from the entirety of the full video that are of particular importance:";
pub const VIDEO_TEXT: &str = "\nHere is a video of the most recent actions the robot has executed:";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("no annotation rule covers {0:?}")]
    UncoveredLabel(String),
    #[error("demonstration run failed: {0}")]
    Run(#[from] OrchestratorError),
    #[error("memory: {0}")]
    Memory(#[from] MemoryError),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Selector {
    First,
    Last,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRule {
    pub subtask_pattern: String,
    pub selector: Selector,
}

/// Per-template selectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<AnnotationRule>,
}

impl RuleSet {
    pub fn for_task(task: TaskKind) -> Self {
        use Selector::*;
        let table: &[(&str, Selector)] = match task {
            TaskKind::Search => &[
                ("look inside the <LOCATION> bin", Last),
                ("take the <OBJECT> from the <LOCATION> bin and place it in the white bin", None),
            ],
            TaskKind::Counting => &[
                ("pick up the scooper", None),
                ("place a scoop of <OBJECT> in the <COLOR> bowl", Last),
                ("reset scooper position", None),
                ("drop the scooper", None),
            ],
            TaskKind::Dust => &[
                ("remove the object on the bottom shelf", Last),
                ("remove the object on the top shelf", Last),
                ("pick up duster", None),
                ("dust bottom shelf", Last),
                ("reset duster", None),
                ("dust top shelf", Last),
                ("put down duster", None),
                ("place the <OBJECT> on the bottom shelf", Last),
                ("place the <OBJECT> on the top shelf", Last),
            ],
        };
        RuleSet {
            rules: table.iter().map(|(p, s)| AnnotationRule { subtask_pattern: p.to_string(), selector: *s }).collect(),
        }
    }

    pub fn selector(&self, cmd: &SubtaskCommand) -> Result<Selector, DatagenError> {
        let template = cmd.template();
        self.rules
            .iter()
            .find(|r| r.subtask_pattern == template)
            .map(|r| r.selector)
            .ok_or_else(|| DatagenError::UncoveredLabel(cmd.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSegment {
    pub label: SubtaskCommand,
    pub start: FrameIndex,
    /// Inclusive.
    pub end: FrameIndex,
}

/// Maximal runs of equal labels.
pub fn segments(labels: &[SubtaskCommand]) -> Vec<SubtaskSegment> {
    let mut out: Vec<SubtaskSegment> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let i = FrameIndex(i as u64);
        match out.last_mut() {
            Some(s) if s.label == *l => s.end = i,
            _ => out.push(SubtaskSegment { label: l.clone(), start: i, end: i }),
        }
    }
    out
}

pub fn annotate_segments(segs: &[SubtaskSegment], rules: &RuleSet) -> Result<Vec<FrameIndex>, DatagenError> {
    let mut out = Vec::new();
    for s in segs {
        match rules.selector(&s.label)? {
            Selector::First => out.push(s.start),
            Selector::Last => out.push(s.end),
            Selector::None => {}
        }
    }
    out.sort();
    Ok(out)
}

/// One high-level decision point of a demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTick {
    pub tick: FrameIndex,
    pub instruction: String,
    /// Subtask committed at this tick, i.e. the one executed from here on.
    pub subtask: SubtaskCommand,
}

#[derive(Debug, Clone)]
pub struct Demonstration {
    pub task: TaskKind,
    pub seed: u64,
    pub frames: Vec<Observation>,
    /// Subtask being executed when each frame was captured.
    pub labels: Vec<SubtaskCommand>,
    pub ticks: Vec<DemoTick>,
    pub score: TaskScore,
    pub log: EpisodeLog,
}

impl Demonstration {
    pub fn id(&self) -> String {
        format!("{}-{}", self.task.name(), self.seed)
    }

    pub fn segments(&self) -> Vec<SubtaskSegment> {
        segments(&self.labels)
    }
}

/// Oracle high-level policy with a failure-free low-level executor.
pub fn generate_demo(task: TaskKind, seed: u64) -> Result<Demonstration, DatagenError> {
    generate_demo_with(task, &RunConfig { seed, ..RunConfig::default() })
}

pub fn generate_demo_with(task: TaskKind, cfg: &RunConfig) -> Result<Demonstration, DatagenError> {
    let ep = run_task(task, HlSpec::Plain(Variant::Oracle), FailureProfile::none(), cfg)?;
    let labels = ep.log.frame_labels();
    let ticks = ep
        .log
        .events()
        .filter_map(|(_, e)| match e {
            Event::HLDecision { tick, instruction, subtask, .. } => {
                Some(DemoTick { tick: *tick, instruction: instruction.clone(), subtask: subtask.clone() })
            }
            _ => None,
        })
        .collect();
    Ok(Demonstration { task, seed: cfg.seed, frames: ep.frames, labels, ticks, score: ep.score, log: ep.log })
}

pub fn annotate(demo: &Demonstration, rules: &RuleSet) -> Result<Vec<FrameIndex>, DatagenError> {
    annotate_segments(&demo.segments(), rules)
}

/// Ground-truth nominations: at every decision tick and at the final frame,
/// the annotated keyframes inside that tick's window.
pub fn ground_truth_batches(demo: &Demonstration, keyframes: &[FrameIndex], window_len: usize) -> Vec<NominationBatch> {
    let mut ticks: BTreeSet<FrameIndex> = demo.ticks.iter().map(|t| t.tick).collect();
    if let Some(last) = demo.frames.last() {
        ticks.insert(last.index);
    }
    ticks
        .into_iter()
        .map(|t| {
            let start = (t.0 + 1).saturating_sub(window_len as u64);
            let inside: Vec<FrameIndex> = keyframes.iter().copied().filter(|k| k.0 >= start && k.0 <= t.0).collect();
            NominationBatch::from_absolute(t, inside).expect("in-window indices")
        })
        .collect()
}

/// Feeds the ground-truth nominations through memory and returns what it
/// selects at the final frame together with the annotated keyframes that had
/// left the window by then. The two agree when training and runtime agree.
pub fn consistency_check(
    demo: &Demonstration,
    keyframes: &[FrameIndex],
    cfg: MemoryConfig,
) -> Result<(Vec<FrameIndex>, Vec<FrameIndex>), DatagenError> {
    let mut mem = MemoryState::new(cfg)?;
    for b in ground_truth_batches(demo, keyframes, cfg.window_len) {
        mem.ingest(&b)?;
    }
    let last = demo.frames.last().map_or(FrameIndex(0), |o| o.index);
    let selected = mem.selected_keyframes(last).indices;
    let start = cfg.window_start(last);
    let exited = keyframes.iter().copied().filter(|k| *k < start).collect();
    Ok((selected, exited))
}

/// Content-addressed frame id.
pub fn frame_id(o: &Observation) -> String {
    let bytes = serde_json::to_vec(o).expect("observations serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssistantPayload {
    pub current_subtask: String,
    pub keyframe_positions: Vec<usize>,
}

impl AssistantPayload {
    /// Fixed spacing: `{"current_subtask": "...", "keyframe_positions": [7]}`.
    pub fn to_text(&self) -> String {
        let positions: Vec<String> = self.keyframe_positions.iter().map(usize::to_string).collect();
        format!(
            "{{\"current_subtask\": {}, \"keyframe_positions\": [{}]}}",
            Value::String(self.current_subtask.clone()),
            positions.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub system_text: String,
    pub user_text: String,
    pub keyframe_refs: Vec<String>,
    pub video_refs: Vec<String>,
    pub assistant: AssistantPayload,
}

fn frame_ref(id: &str) -> String {
    format!("frame:{id}")
}

impl PromptRecord {
    /// The chat-message layout used for training.
    pub fn to_messages(&self) -> Value {
        let mut user = vec![json!({ "text": self.user_text })];
        user.extend(self.keyframe_refs.iter().map(|r| json!({ "image": frame_ref(r) })));
        user.push(json!({ "text": VIDEO_TEXT }));
        user.push(json!({ "video": self.video_refs.iter().map(|r| frame_ref(r)).collect::<Vec<_>>() }));
        json!({
            "id": self.id,
            "messages": [
                { "role": "system", "content": [{ "text": self.system_text }] },
                { "role": "user", "content": user },
                { "role": "assistant", "content": [{ "text": self.assistant.to_text() }] },
            ]
        })
    }
}

pub fn user_text(instruction: &str) -> String {
    format!("{TASK_PREFIX}{instruction}{MEMORY_TEXT}")
}

/// One record per decision tick.
pub fn export_prompts(demo: &Demonstration, keyframes: &[FrameIndex], window_len: usize) -> Vec<PromptRecord> {
    let ids: Vec<String> = demo.frames.iter().map(frame_id).collect();
    demo.ticks
        .iter()
        .map(|t| {
            let start = (t.tick.0 + 1).saturating_sub(window_len as u64);
            let video: Vec<u64> = (start..=t.tick.0).collect();
            let keyframe_refs = keyframes.iter().filter(|k| k.0 < start).map(|k| ids[k.0 as usize].clone()).collect();
            let keyframe_positions = keyframes
                .iter()
                .filter(|k| k.0 >= start && k.0 <= t.tick.0)
                .map(|k| (k.0 - start) as usize + 1)
                .collect();
            PromptRecord {
                id: format!("{}-t{:04}", demo.id(), t.tick.0),
                system_text: SYSTEM_TEXT.to_string(),
                user_text: user_text(&t.instruction),
                keyframe_refs,
                video_refs: video.iter().map(|i| ids[*i as usize].clone()).collect(),
                assistant: AssistantPayload { current_subtask: t.subtask.to_string(), keyframe_positions },
            }
        })
        .collect()
}

/// JSON Schema (draft-07) for one exported line.
pub fn schema() -> Value {
    let text = json!({ "type": "object", "required": ["text"], "additionalProperties": false,
        "properties": { "text": { "type": "string" } } });
    let image = json!({ "type": "object", "required": ["image"], "additionalProperties": false,
        "properties": { "image": { "type": "string", "pattern": "^frame:[0-9a-f]{16}$" } } });
    let video = json!({ "type": "object", "required": ["video"], "additionalProperties": false,
        "properties": { "video": { "type": "array", "minItems": 1,
            "items": { "type": "string", "pattern": "^frame:[0-9a-f]{16}$" } } } });
    let message = |role: &str, items: Value| {
        json!({ "type": "object", "required": ["role", "content"], "additionalProperties": false,
            "properties": { "role": { "const": role }, "content": items } })
    };
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "keyframe prompt record",
        "type": "object",
        "required": ["id", "messages"],
        "additionalProperties": false,
        "properties": {
            "id": { "type": "string" },
            "messages": {
                "type": "array",
                "items": [
                    message("system", json!({ "type": "array", "items": [{ "allOf": [text, { "properties": { "text": { "const": SYSTEM_TEXT } } }] }], "minItems": 1, "maxItems": 1 })),
                    message("user", json!({ "type": "array", "minItems": 3, "items": { "anyOf": [text, image, video] } })),
                    message("assistant", json!({ "type": "array", "minItems": 1, "maxItems": 1, "items": [text] })),
                ],
                "minItems": 3,
                "maxItems": 3
            }
        },
        "x-assistant-text": {
            "type": "object",
            "required": ["current_subtask", "keyframe_positions"],
            "additionalProperties": false,
            "properties": {
                "current_subtask": { "type": "string" },
                "keyframe_positions": { "type": "array", "items": { "type": "integer", "minimum": 1 }, "uniqueItems": true }
            }
        }
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    messages: Vec<Message>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Message {
    role: String,
    content: Vec<Content>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Content {
    Text(TextPart),
    Image(ImagePart),
    Video(VideoPart),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextPart {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImagePart {
    image: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoPart {
    video: Vec<String>,
}

fn is_frame_ref(s: &str) -> bool {
    s.strip_prefix("frame:")
        .is_some_and(|h| h.len() == 16 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
}

/// Checks one exported line against the schema plus the constraints JSON
/// Schema cannot express: positions inside the video, a parseable subtask.
pub fn validate_record(line: &Value, window_len: usize) -> Result<AssistantPayload, DatagenError> {
    let bad = |m: String| DatagenError::InvalidRecord(m);
    let line: Line = serde_json::from_value(line.clone()).map_err(|e| bad(e.to_string()))?;
    let [system, user, assistant] = line.messages.as_slice() else {
        return Err(bad(format!("{}: expected three messages", line.id)));
    };
    if (system.role.as_str(), user.role.as_str(), assistant.role.as_str()) != ("system", "user", "assistant") {
        return Err(bad(format!("{}: roles out of order", line.id)));
    }
    match system.content.as_slice() {
        [Content::Text(t)] if t.text == SYSTEM_TEXT => {}
        _ => return Err(bad(format!("{}: system text differs", line.id))),
    }
    let Some((Content::Text(head), rest)) = user.content.split_first() else {
        return Err(bad(format!("{}: user message must open with the task text", line.id)));
    };
    if !head.text.starts_with(TASK_PREFIX) || !head.text.ends_with(MEMORY_TEXT) {
        return Err(bad(format!("{}: task text malformed", line.id)));
    }
    let images = rest.iter().take_while(|c| matches!(c, Content::Image(_))).count();
    for c in &rest[..images] {
        if let Content::Image(i) = c {
            if !is_frame_ref(&i.image) {
                return Err(bad(format!("{}: bad image ref {}", line.id, i.image)));
            }
        }
    }
    let video = match &rest[images..] {
        [Content::Text(t), Content::Video(v)] if t.text == VIDEO_TEXT => &v.video,
        _ => return Err(bad(format!("{}: video section malformed", line.id))),
    };
    if video.is_empty() || video.len() > window_len || !video.iter().all(|r| is_frame_ref(r)) {
        return Err(bad(format!("{}: video must hold 1..={window_len} frame refs", line.id)));
    }
    let [Content::Text(answer)] = assistant.content.as_slice() else {
        return Err(bad(format!("{}: assistant must hold one text part", line.id)));
    };
    let payload: AssistantPayload = serde_json::from_str(&answer.text).map_err(|e| bad(format!("{}: {e}", line.id)))?;
    if payload.current_subtask.parse::<SubtaskCommand>().is_err() {
        return Err(bad(format!("{}: unknown subtask {:?}", line.id, payload.current_subtask)));
    }
    let p = &payload.keyframe_positions;
    if p.iter().any(|x| *x == 0 || *x > video.len()) || p.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(format!("{}: keyframe positions {p:?} outside 1..={}", line.id, video.len())));
    }
    Ok(payload)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: TaskKind,
    pub seeds: Vec<u64>,
    pub window_len: usize,
    pub rules: RuleSet,
    pub records: usize,
    pub frames: usize,
    pub files: Vec<PathBuf>,
}

/// Writes `prompts.jsonl`, `frames.jsonl`, `schema.json` and `manifest.json`.
pub fn write_dataset(
    out: &Path,
    task: TaskKind,
    seeds: &[u64],
    cfg: &RunConfig,
) -> Result<DatasetManifest, DatagenError> {
    fs::create_dir_all(out)?;
    let rules = RuleSet::for_task(task);
    let mut prompts = Vec::new();
    let mut frames: BTreeMap<String, Value> = BTreeMap::new();
    let mut records = 0;
    for &seed in seeds {
        let demo = generate_demo_with(task, &RunConfig { seed, ..cfg.clone() })?;
        let keyframes = annotate(&demo, &rules)?;
        for r in export_prompts(&demo, &keyframes, cfg.memory.window_len) {
            let line = r.to_messages();
            validate_record(&line, cfg.memory.window_len)?;
            serde_json::to_writer(&mut prompts, &line).map_err(std::io::Error::from)?;
            prompts.push(b'\n');
            records += 1;
        }
        for o in &demo.frames {
            frames.insert(frame_id(o), json!({ "demo": demo.id(), "observation": o }));
        }
    }
    let mut frame_lines = Vec::new();
    for (id, v) in &frames {
        let mut v = v.clone();
        v["id"] = Value::String(id.clone());
        serde_json::to_writer(&mut frame_lines, &v).map_err(std::io::Error::from)?;
        frame_lines.push(b'\n');
    }
    let files: Vec<PathBuf> =
        ["prompts.jsonl", "frames.jsonl", "schema.json", "manifest.json"].iter().map(|f| out.join(f)).collect();
    fs::write(&files[0], prompts)?;
    fs::write(&files[1], frame_lines)?;
    fs::write(&files[2], serde_json::to_string_pretty(&schema()).expect("schema serializes") + "\n")?;
    let manifest = DatasetManifest {
        task,
        seeds: seeds.to_vec(),
        window_len: cfg.memory.window_len,
        rules,
        records,
        frames: frames.len(),
        files: files.clone(),
    };
    let mut f = fs::File::create(&files[3])?;
    f.write_all(serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simenv::{Bin, Shelf};

    fn seg(label: SubtaskCommand, start: u64, end: u64) -> SubtaskSegment {
        SubtaskSegment { label, start: FrameIndex(start), end: FrameIndex(end) }
    }

    #[test]
    fn rule_examples() {
        let r = RuleSet::for_task(TaskKind::Search);
        let k = annotate_segments(&[seg(SubtaskCommand::LookInside(Bin::Center), 5, 12)], &r).unwrap();
        assert_eq!(k, vec![FrameIndex(12)]);
        let r = RuleSet::for_task(TaskKind::Counting);
        assert!(annotate_segments(&[seg(SubtaskCommand::ResetScooper, 20, 23)], &r).unwrap().is_empty());
        let first = RuleSet {
            rules: vec![AnnotationRule { subtask_pattern: "dust top shelf".into(), selector: Selector::First }],
        };
        let k = annotate_segments(&[seg(SubtaskCommand::DustShelf(Shelf::Top), 9, 9)], &first).unwrap();
        assert_eq!(k, vec![FrameIndex(9)]);
    }

    #[test]
    fn every_label_has_exactly_one_rule() {
        for task in TaskKind::ALL {
            let rules = RuleSet::for_task(task);
            let templates: BTreeSet<&str> = SubtaskCommand::enumerate(task).iter().map(|c| c.template()).collect();
            let patterns: BTreeSet<&str> = rules.rules.iter().map(|r| r.subtask_pattern.as_str()).collect();
            assert_eq!(templates, patterns, "{task}");
            assert_eq!(patterns.len(), rules.rules.len());
        }
        let r = RuleSet::for_task(TaskKind::Search);
        assert!(matches!(r.selector(&SubtaskCommand::PickUpScooper), Err(DatagenError::UncoveredLabel(_))));
    }

    #[test]
    fn segments_partition_labels() {
        use SubtaskCommand::*;
        let labels = vec![PickUpScooper, PickUpScooper, ResetScooper, DropScooper, DropScooper];
        let s = segments(&labels);
        assert_eq!(s, vec![seg(PickUpScooper, 0, 1), seg(ResetScooper, 2, 2), seg(DropScooper, 3, 4)]);
    }

    #[test]
    fn assistant_text_has_fixed_spacing() {
        let p = AssistantPayload {
            current_subtask: "take the fried chicken from the right bin and place in the white bin".into(),
            keyframe_positions: vec![7],
        };
        assert_eq!(
            p.to_text(),
            r#"{"current_subtask": "take the fried chicken from the right bin and place in the white bin", "keyframe_positions": [7]}"#
        );
        let p = AssistantPayload { current_subtask: "reset scooper position".into(), keyframe_positions: vec![] };
        assert_eq!(p.to_text(), r#"{"current_subtask": "reset scooper position", "keyframe_positions": []}"#);
    }

    #[test]
    fn validator_rejects_extra_fields_and_bad_positions() {
        let demo = generate_demo(TaskKind::Counting, 3).unwrap();
        let k = annotate(&demo, &RuleSet::for_task(TaskKind::Counting)).unwrap();
        let rec =
            export_prompts(&demo, &k, 8).into_iter().find(|r| !r.assistant.keyframe_positions.is_empty()).unwrap();
        let good = rec.to_messages();
        assert!(validate_record(&good, 8).is_ok());
        let mut extra = good.clone();
        extra["messages"][0]["note"] = json!("x");
        assert!(validate_record(&extra, 8).is_err());
        let mut bad = rec.clone();
        bad.assistant.keyframe_positions = vec![9];
        assert!(validate_record(&bad.to_messages(), 8).is_err());
        let mut bad = rec;
        bad.assistant.current_subtask = "juggle".into();
        assert!(validate_record(&bad.to_messages(), 8).is_err());
    }
}
