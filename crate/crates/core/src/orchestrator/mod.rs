//! Dual-rate closed loop over a deterministic virtual clock.
//!
//! Three periodic producers share one timeline: the observer samples a frame
//! into the queue, the high-level policy decides from the recent window plus
//! selected keyframes and commits a subtask to the latch, and the low-level
//! policy reads the latch and executes the head of an action chunk. When
//! several are due at the same instant they run in that order.

mod clock;
mod log;
mod replay;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{FrameIndex, MemoryConfig, MemoryError, MemoryState, NominationBatch};
use crate::policies::{FailureProfile, HlContext, HlPolicy, HlSpec, LlPolicy, PolicyError, ScriptedLl};
use crate::simenv::{
    reset, Action, Durations, EpisodeStatus, Observation, SubtaskCommand, TaskKind, TaskScore, WorldState,
};

pub use clock::VirtualClock;
pub use log::{EpisodeLog, Event, LogRecord};
pub use replay::{replay_actions, rerun, ReplayReport};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("policy failed at tick {tick:?}: {source}")]
    Policy { tick: FrameIndex, source: PolicyError },
    #[error("memory rejected nominations at tick {tick:?}: {source}")]
    Memory { tick: FrameIndex, source: MemoryError },
    #[error("high-level tick with an empty observation queue")]
    EmptyWindow,
    #[error("low-level tick at {t_ms} ms before any subtask was committed")]
    NoSubtaskYet { t_ms: u64 },
    #[error("log has no episode start record")]
    MissingStart,
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub hl_period_ms: u64,
    pub ll_period_ms: u64,
    pub obs_period_ms: u64,
    pub chunk_len: usize,
    pub open_loop_exec: usize,
    pub memory: MemoryConfig,
    pub seed: u64,
    /// High-level ticks before the episode is cut off.
    pub max_ticks: u64,
    pub durations: Durations,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hl_period_ms: 1000,
            ll_period_ms: 500,
            obs_period_ms: 500,
            chunk_len: 15,
            open_loop_exec: 8,
            memory: MemoryConfig::default(),
            seed: 0,
            max_ticks: 600,
            durations: Durations::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidConfig(m.to_string()));
        if self.hl_period_ms == 0 || self.ll_period_ms == 0 || self.obs_period_ms == 0 {
            return bad("all periods must be positive");
        }
        if self.open_loop_exec > self.chunk_len {
            return bad("open_loop_exec exceeds chunk_len");
        }
        self.memory.validate().map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))
    }

    /// Every period equal and whole chunks executed.
    pub fn lockstep(mut self) -> Self {
        self.hl_period_ms = self.obs_period_ms;
        self.ll_period_ms = self.obs_period_ms;
        self.open_loop_exec = self.chunk_len;
        self
    }
}

/// Most recently committed subtask.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskLatch {
    pub current: Option<(SubtaskCommand, FrameIndex)>,
}

/// Frames sampled so far; the high-level policy sees the newest `N`.
#[derive(Debug, Clone, Default)]
pub struct ObservationQueue {
    frames: Vec<Observation>,
}

impl ObservationQueue {
    pub fn push(&mut self, o: Observation) {
        debug_assert!(self.frames.last().is_none_or(|l| l.index < o.index));
        self.frames.push(o);
    }

    pub fn newest(&self) -> Option<&Observation> {
        self.frames.last()
    }

    pub fn snapshot(&self, n: usize) -> &[Observation] {
        &self.frames[self.frames.len().saturating_sub(n)..]
    }

    pub fn get(&self, i: FrameIndex) -> Option<&Observation> {
        self.frames.get(i.0 as usize)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_frames(self) -> Vec<Observation> {
        self.frames
    }
}

/// Controls how the loop waits between events.
pub trait Pacer {
    fn wait_until(&mut self, t_ms: u64);
}

/// Runs as fast as possible; used everywhere except demos.
pub struct Virtual;

impl Pacer for Virtual {
    fn wait_until(&mut self, _: u64) {}
}

/// Sleeps so events fire at their scheduled wall-clock time, scaled by `speed`.
pub struct WallClock {
    start: Instant,
    speed: f64,
}

impl WallClock {
    pub fn new(speed: f64) -> Self {
        WallClock { start: Instant::now(), speed: speed.max(1e-3) }
    }
}

impl Pacer for WallClock {
    fn wait_until(&mut self, t_ms: u64) {
        let due = self.start + Duration::from_secs_f64(t_ms as f64 / 1000.0 / self.speed);
        if let Some(d) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(d);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tick {
    Observe,
    High,
    Low,
}

pub struct Episode {
    pub log: EpisodeLog,
    pub final_state: WorldState,
    pub status: EpisodeStatus,
    pub score: TaskScore,
    pub frames: Vec<Observation>,
    pub memory: MemoryState,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    env: WorldState,
    hl: &'a mut dyn HlPolicy,
    ll: &'a mut dyn LlPolicy,
    queue: ObservationQueue,
    memory: MemoryState,
    latch: SubtaskLatch,
    text: Vec<String>,
    evicted: BTreeSet<FrameIndex>,
    hl_ticks: u64,
    log: EpisodeLog,
}

impl Runner<'_> {
    fn observe(&mut self, t: u64) {
        let o = self.env.observe(FrameIndex(self.queue.len() as u64));
        self.log.push(t, Event::ObservationSampled { observation: o.clone() });
        self.queue.push(o);
    }

    fn high(&mut self, t: u64) -> Result<(), OrchestratorError> {
        let tick = self.queue.newest().ok_or(OrchestratorError::EmptyWindow)?.index;
        let window = self.queue.snapshot(self.cfg.memory.window_len).to_vec();
        let (selected, evicted) = self.memory.select(tick);
        let fresh: Vec<FrameIndex> = evicted.into_iter().filter(|e| self.evicted.insert(*e)).collect();
        if !fresh.is_empty() {
            self.log.push(t, Event::CapEviction { tick, evicted: fresh });
        }
        let keyframes: Vec<Observation> = selected.indices.iter().filter_map(|i| self.queue.get(*i)).cloned().collect();
        let ctx = HlContext {
            tick,
            instruction: self.env.instruction(),
            window,
            keyframes,
            text_memory: self.hl.uses_text_memory().then(|| self.text.clone()),
        };
        let decision = self.hl.decide(&ctx).map_err(|source| OrchestratorError::Policy { tick, source })?;
        let batch = NominationBatch::from_positions(tick, ctx.window.len(), decision.nominations.clone())
            .map_err(|source| OrchestratorError::Memory { tick, source })?;
        self.memory.ingest(&batch).map_err(|source| OrchestratorError::Memory { tick, source })?;
        self.log.push(
            t,
            Event::HLDecision {
                tick,
                instruction: ctx.instruction,
                window: ctx.window.iter().map(|o| o.index).collect(),
                keyframes: selected.indices,
                subtask: decision.subtask.clone(),
                nominations: decision.nominations,
                abs_indices: batch.abs_indices,
                fallback: decision.fallback,
            },
        );
        let label = decision.subtask.to_string();
        if self.text.last() != Some(&label) {
            self.text.push(label);
        }
        self.latch.current = Some((decision.subtask.clone(), tick));
        self.log.push(t, Event::SubtaskCommitted { subtask: decision.subtask, set_at: tick });
        Ok(())
    }

    fn low(&mut self, t: u64) -> Result<(), OrchestratorError> {
        let (subtask, set_at) = self.latch.current.clone().ok_or(OrchestratorError::NoSubtaskYet { t_ms: t })?;
        let obs = self.queue.newest().ok_or(OrchestratorError::EmptyWindow)?;
        let chunk = self.ll.chunk(&subtask, obs, self.cfg.chunk_len);
        let failed = !chunk.is_empty() && chunk.iter().all(|a| *a == Action::Noop);
        self.log.push(t, Event::LLChunkEmitted { subtask, set_at, chunk_len: chunk.len(), failed });
        for action in chunk.into_iter().take(self.cfg.open_loop_exec) {
            let out = self.env.step(&action);
            self.log.push(t, Event::ActionExecuted { action });
            self.log.push(
                t,
                Event::EnvTransition {
                    clock: self.env.clock,
                    illegal: out.illegal,
                    completed: out.completed,
                    terminal: out.terminal,
                },
            );
            if out.terminal {
                break;
            }
        }
        Ok(())
    }
}

/// Runs one episode on a freshly reset environment under virtual time.
pub fn run_episode(
    env: WorldState,
    hl: &mut dyn HlPolicy,
    ll: &mut dyn LlPolicy,
    cfg: &RunConfig,
) -> Result<Episode, OrchestratorError> {
    run_paced(env, hl, ll, cfg, None, &mut Virtual)
}

/// Same schedule as [`run_episode`], optionally recording how the policies
/// were built, with a caller-chosen pacer.
pub fn run_paced(
    env: WorldState,
    hl: &mut dyn HlPolicy,
    ll: &mut dyn LlPolicy,
    cfg: &RunConfig,
    ll_profile: Option<FailureProfile>,
    pacer: &mut dyn Pacer,
) -> Result<Episode, OrchestratorError> {
    cfg.validate()?;
    if env.seed != cfg.seed {
        return Err(OrchestratorError::InvalidConfig(format!(
            "env seed {} differs from config seed {}",
            env.seed, cfg.seed
        )));
    }
    let mut log = EpisodeLog::default();
    log.push(
        0,
        Event::EpisodeStart {
            task: env.task,
            seed: env.seed,
            instruction: env.instruction(),
            hl: hl.spec(),
            ll: ll_profile,
            config: cfg.clone(),
        },
    );
    let memory = MemoryState::new(cfg.memory).map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))?;
    let mut r = Runner {
        cfg,
        env,
        hl,
        ll,
        queue: ObservationQueue::default(),
        memory,
        latch: SubtaskLatch::default(),
        text: Vec::new(),
        evicted: BTreeSet::new(),
        hl_ticks: 0,
        log,
    };
    let mut clock: VirtualClock<Tick> = VirtualClock::new();
    let mut next = [(0u64, Tick::Observe), (0, Tick::High), (0, Tick::Low)];
    let period = |k: Tick| match k {
        Tick::Observe => cfg.obs_period_ms,
        Tick::High => cfg.hl_period_ms,
        Tick::Low => cfg.ll_period_ms,
    };
    let status = 'run: loop {
        // enqueue everything due at the next instant, in phase order
        let t = next.iter().map(|(t, _)| *t).min().expect("three producers");
        for (due, kind) in next.iter_mut() {
            if *due == t {
                clock.schedule(t, *kind);
                *due += period(*kind);
            }
        }
        while let Some((t, kind)) = clock.pop() {
            pacer.wait_until(t);
            match kind {
                Tick::Observe => {
                    r.observe(t);
                    if r.env.terminal {
                        break 'run EpisodeStatus::Terminal;
                    }
                }
                Tick::High if !r.env.terminal => {
                    if r.hl_ticks >= cfg.max_ticks {
                        r.log.push(t, Event::TimeoutAtMaxTicks { hl_ticks: r.hl_ticks });
                        break 'run EpisodeStatus::TimedOut;
                    }
                    r.hl_ticks += 1;
                    r.high(t)?;
                }
                Tick::Low if !r.env.terminal => r.low(t)?,
                _ => {}
            }
        }
    };
    let score = r.env.score(status).expect("finished episodes are scorable");
    let t_end = clock.now();
    r.log.push(
        t_end,
        Event::EpisodeScore {
            status,
            score,
            illegal_actions: r.env.illegal_actions,
            final_state_digest: r.env.digest(),
        },
    );
    Ok(Episode { log: r.log, final_state: r.env, status, score, frames: r.queue.into_frames(), memory: r.memory })
}

/// Resets `task` with `cfg.seed`, builds the policies from their specs and runs.
pub fn run_task(task: TaskKind, hl: HlSpec, ll: FailureProfile, cfg: &RunConfig) -> Result<Episode, OrchestratorError> {
    run_task_paced(task, hl, ll, cfg, &mut Virtual)
}

pub fn run_task_paced(
    task: TaskKind,
    hl: HlSpec,
    ll: FailureProfile,
    cfg: &RunConfig,
    pacer: &mut dyn Pacer,
) -> Result<Episode, OrchestratorError> {
    ll.validate().map_err(OrchestratorError::InvalidConfig)?;
    let (env, _) = reset(task, cfg.seed, cfg.durations);
    let mut hl_policy = hl.build(cfg.seed);
    let mut ll_policy = ScriptedLl::new(ll.clone());
    run_paced(env, hl_policy.as_mut(), &mut ll_policy, cfg, Some(ll), pacer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::Variant;

    #[test]
    fn first_slot_orders_observe_high_low() {
        let ep =
            run_task(TaskKind::Search, HlSpec::Plain(Variant::Oracle), FailureProfile::none(), &RunConfig::default())
                .unwrap();
        let kinds: Vec<&str> = ep
            .log
            .records
            .iter()
            .skip(1)
            .take(4)
            .map(|r| match r.event {
                Event::ObservationSampled { .. } => "obs",
                Event::HLDecision { .. } => "hl",
                Event::SubtaskCommitted { .. } => "commit",
                Event::LLChunkEmitted { .. } => "ll",
                _ => "other",
            })
            .collect();
        assert_eq!(kinds, vec!["obs", "hl", "commit", "ll"]);
    }

    #[test]
    fn bad_configs_rejected() {
        let cfg = RunConfig { open_loop_exec: 16, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { ll_period_ms: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
