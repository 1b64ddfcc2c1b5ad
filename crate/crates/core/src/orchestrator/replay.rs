use serde::{Deserialize, Serialize};

use super::{run_task, EpisodeLog, Event, OrchestratorError, RunConfig};
use crate::policies::{FailureProfile, HlSpec};
use crate::simenv::{reset, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub task: TaskKind,
    pub seed: u64,
    pub actions: usize,
    pub logged_digest: String,
    pub replayed_digest: String,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.logged_digest == self.replayed_digest
    }
}

fn start_of(log: &EpisodeLog) -> Result<(TaskKind, u64, String, Option<FailureProfile>, RunConfig), OrchestratorError> {
    match log.start() {
        Some(Event::EpisodeStart { task, seed, hl, ll, config, .. }) => {
            Ok((*task, *seed, hl.clone(), ll.clone(), config.clone()))
        }
        _ => Err(OrchestratorError::MissingStart),
    }
}

/// Re-applies every executed action to a fresh environment, checking each
/// logged observation on the way, and compares final-state digests.
pub fn replay_actions(log: &EpisodeLog) -> Result<ReplayReport, OrchestratorError> {
    let (task, seed, _, _, cfg) = start_of(log)?;
    let (mut env, _) = reset(task, seed, cfg.durations);
    let mut actions = 0;
    for (t, event) in log.events() {
        match event {
            Event::ActionExecuted { action } => {
                env.step(action);
                actions += 1;
            }
            Event::ObservationSampled { observation } if env.observe(observation.index) != *observation => {
                return Err(OrchestratorError::ReplayMismatch(format!(
                    "frame {} at {t} ms differs",
                    observation.index.0
                )));
            }
            _ => {}
        }
    }
    let logged_digest = log
        .final_score()
        .map(|(_, _, d)| d.to_string())
        .ok_or_else(|| OrchestratorError::ReplayMismatch("log has no final score".into()))?;
    Ok(ReplayReport { task, seed, actions, logged_digest, replayed_digest: env.digest() })
}

/// Rebuilds the policies named in the log and runs the episode again.
pub fn rerun(log: &EpisodeLog) -> Result<EpisodeLog, OrchestratorError> {
    let (task, _, hl, ll, cfg) = start_of(log)?;
    let hl: HlSpec = hl.parse().map_err(|e| OrchestratorError::InvalidConfig(format!("{e}")))?;
    let ll = ll.ok_or_else(|| OrchestratorError::InvalidConfig("log does not name its low-level policy".into()))?;
    Ok(run_task(task, hl, ll, &cfg)?.log)
}
