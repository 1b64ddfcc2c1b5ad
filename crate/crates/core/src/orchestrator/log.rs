use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::memory::FrameIndex;
use crate::policies::FailureProfile;
use crate::simenv::{Action, EpisodeStatus, Observation, SubtaskCommand, TaskKind, TaskScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    /// Enough to rebuild the run: task, seed, policies and config.
    EpisodeStart {
        task: TaskKind,
        seed: u64,
        instruction: String,
        hl: String,
        ll: Option<FailureProfile>,
        config: RunConfig,
    },
    ObservationSampled {
        observation: Observation,
    },
    HLDecision {
        tick: FrameIndex,
        instruction: String,
        window: Vec<FrameIndex>,
        keyframes: Vec<FrameIndex>,
        subtask: SubtaskCommand,
        nominations: Vec<usize>,
        abs_indices: Vec<FrameIndex>,
        fallback: bool,
    },
    CapEviction {
        tick: FrameIndex,
        evicted: Vec<FrameIndex>,
    },
    SubtaskCommitted {
        subtask: SubtaskCommand,
        set_at: FrameIndex,
    },
    LLChunkEmitted {
        subtask: SubtaskCommand,
        set_at: FrameIndex,
        chunk_len: usize,
        failed: bool,
    },
    ActionExecuted {
        action: Action,
    },
    EnvTransition {
        clock: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        illegal: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        completed: Option<SubtaskCommand>,
        terminal: bool,
    },
    TimeoutAtMaxTicks {
        hl_ticks: u64,
    },
    EpisodeScore {
        status: EpisodeStatus,
        score: TaskScore,
        illegal_actions: u64,
        final_state_digest: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

impl EpisodeLog {
    pub fn push(&mut self, t_ms: u64, event: Event) {
        self.records.push(LogRecord { t_ms, event });
    }

    pub fn events(&self) -> impl Iterator<Item = (u64, &Event)> {
        self.records.iter().map(|r| (r.t_ms, &r.event))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, serde_json::Error> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line.map_err(serde_json::Error::io)?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(EpisodeLog { records })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, serde_json::Error> {
        Self::read_jsonl(s.as_bytes())
    }

    pub fn start(&self) -> Option<&Event> {
        self.records.iter().map(|r| &r.event).find(|e| matches!(e, Event::EpisodeStart { .. }))
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::ObservationSampled { observation } => Some(observation),
            _ => None,
        })
    }

    pub fn final_score(&self) -> Option<(EpisodeStatus, TaskScore, &str)> {
        self.records.iter().rev().find_map(|r| match &r.event {
            Event::EpisodeScore { status, score, final_state_digest, .. } => {
                Some((*status, *score, final_state_digest.as_str()))
            }
            _ => None,
        })
    }

    /// `(t_ms, tick, subtask)` for every commit, in order.
    pub fn commits(&self) -> Vec<(u64, FrameIndex, SubtaskCommand)> {
        self.records
            .iter()
            .filter_map(|r| match &r.event {
                Event::SubtaskCommitted { subtask, set_at } => Some((r.t_ms, *set_at, subtask.clone())),
                _ => None,
            })
            .collect()
    }

    /// The subtask the arm was executing when each frame was captured: the
    /// latch before that frame's own decision. Frame 0 takes the first commit.
    pub fn frame_labels(&self) -> Vec<SubtaskCommand> {
        let mut latch: Option<SubtaskCommand> = None;
        let mut labels: Vec<Option<SubtaskCommand>> = Vec::new();
        for r in &self.records {
            match &r.event {
                Event::ObservationSampled { .. } => labels.push(latch.clone()),
                Event::SubtaskCommitted { subtask, .. } => latch = Some(subtask.clone()),
                _ => {}
            }
        }
        let Some((_, _, first)) = self.commits().into_iter().next() else { return Vec::new() };
        labels.into_iter().map(|l| l.unwrap_or_else(|| first.clone())).collect()
    }
}
