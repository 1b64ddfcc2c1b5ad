//! Symbolic, seeded, partially observable task simulators.
//!
//! Each task keeps its hidden state in [`WorldState`] and exposes only what a
//! camera would see at that instant through [`WorldState::observe`]. Subtasks
//! take a fixed number of low-level actions to complete; completion effects
//! (open bin, poured scoop, dust stroke) are visible only while the arm is
//! still at the completed subtask, and a poured scoop only in the frame right
//! after the pour.

mod counting;
mod dust;
pub mod grammar;
pub mod hardness;
mod search;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::memory::FrameIndex;

pub use counting::{parse_counting_instruction, CountingScene, CountingState, ScoopTally, ScooperPhase};
pub use dust::{DustReplaceState, DustScene, DusterPose, INSTRUCTION as DUST_INSTRUCTION};
pub use grammar::{Bin, Bowl, Ingredient, Shelf, SubtaskCommand, TaskKind, Verb};
pub use search::{
    min_looks, parse_search_instruction, search_instruction, BinView, ObjectSearchState, SearchAttempt, SearchScene,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("episode has not finished")]
    IncompleteEpisode,
}

/// Low-level ticks each subtask needs, multiplied by `actions_per_tick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Durations {
    pub actions_per_tick: u32,
    pub look: u32,
    pub take: u32,
    pub pick_up_scooper: u32,
    pub scoop: u32,
    pub reset_scooper: u32,
    pub drop_scooper: u32,
    pub remove: u32,
    pub pick_up_duster: u32,
    pub dust: u32,
    pub reset_duster: u32,
    pub put_down_duster: u32,
    pub place: u32,
}

impl Default for Durations {
    fn default() -> Self {
        Durations {
            actions_per_tick: 8,
            look: 6,
            take: 6,
            pick_up_scooper: 3,
            scoop: 6,
            reset_scooper: 3,
            drop_scooper: 3,
            remove: 6,
            pick_up_duster: 3,
            dust: 6,
            reset_duster: 3,
            put_down_duster: 3,
            place: 6,
        }
    }
}

impl Durations {
    pub fn ticks(&self, cmd: &SubtaskCommand) -> u32 {
        use SubtaskCommand::*;
        match cmd {
            LookInside(_) => self.look,
            Take { .. } => self.take,
            PickUpScooper => self.pick_up_scooper,
            PlaceScoop { .. } => self.scoop,
            ResetScooper => self.reset_scooper,
            DropScooper => self.drop_scooper,
            RemoveObject(_) => self.remove,
            PickUpDuster => self.pick_up_duster,
            DustShelf(_) => self.dust,
            ResetDuster => self.reset_duster,
            PutDownDuster => self.put_down_duster,
            PlaceObject { .. } => self.place,
        }
    }

    pub fn actions(&self, cmd: &SubtaskCommand) -> u32 {
        (self.ticks(cmd) * self.actions_per_tick).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Noop,
    Step { verb: Verb, subtask: SubtaskCommand },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub illegal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub completed: Option<SubtaskCommand>,
    pub terminal: bool,
}

/// What the arm is currently doing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub subtask: SubtaskCommand,
    pub progress: u32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraTag {
    Global,
    Wrist,
}

/// Where the arm is, as seen by the cameras.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "site", content = "at", rename_all = "snake_case")]
pub enum ArmSite {
    #[default]
    Home,
    /// Hovering over a bin, lid open once the look completes.
    Bin(Bin),
    /// Reaching into a bin to grasp.
    InBin(Bin),
    WhiteBin,
    ScooperStand,
    Bowl(Bowl),
    Shelf(Shelf),
    DusterStand,
    /// Hover pose the duster returns to between strokes.
    Hover,
}

impl ArmSite {
    fn of(a: &Activity) -> ArmSite {
        use SubtaskCommand::*;
        match &a.subtask {
            LookInside(b) => ArmSite::Bin(*b),
            Take { .. } if a.done => ArmSite::WhiteBin,
            Take { bin, .. } => ArmSite::InBin(*bin),
            PickUpScooper | ResetScooper if a.done => ArmSite::Home,
            PickUpScooper | DropScooper => ArmSite::ScooperStand,
            ResetScooper => ArmSite::Home,
            PlaceScoop { bowl, .. } => ArmSite::Bowl(*bowl),
            RemoveObject(s) | DustShelf(s) => ArmSite::Shelf(*s),
            PlaceObject { shelf, .. } => ArmSite::Shelf(*shelf),
            PickUpDuster if a.done => ArmSite::Hover,
            PickUpDuster | PutDownDuster => ArmSite::DusterStand,
            ResetDuster => ArmSite::Hover,
        }
    }
}

/// Visible arm state: location and whether it is mid-motion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmView {
    pub at: ArmSite,
    pub busy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Scene {
    Search(SearchScene),
    Counting(CountingScene),
    Dust(DustScene),
}

/// Composite frame from the global and wrist cameras at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub index: FrameIndex,
    pub cameras: [CameraTag; 2],
    pub arm: ArmView,
    pub scene: Scene,
}

impl Observation {
    pub fn search(&self) -> Option<&SearchScene> {
        match &self.scene {
            Scene::Search(s) => Some(s),
            _ => None,
        }
    }

    pub fn counting(&self) -> Option<&CountingScene> {
        match &self.scene {
            Scene::Counting(s) => Some(s),
            _ => None,
        }
    }

    pub fn dust(&self) -> Option<&DustScene> {
        match &self.scene {
            Scene::Dust(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskState {
    Search(ObjectSearchState),
    Counting(CountingState),
    Dust(DustReplaceState),
}

/// Full simulator state, hidden parts included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub task: TaskKind,
    pub seed: u64,
    pub durations: Durations,
    pub activity: Option<Activity>,
    pub terminal: bool,
    /// Legal steps applied so far.
    pub clock: u64,
    pub illegal_actions: u64,
    pub inner: TaskState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Terminal,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskScore {
    Search { retrieved: u32, optimal: u32 },
    Counting { wrong_scoops: u32 },
    Dust { dust_bottom: bool, dust_top: bool, replace_bottom: bool, replace_top: bool },
}

impl TaskScore {
    /// Points for search and dust; wrong scoops for counting (lower is better).
    pub fn total(&self) -> u32 {
        match *self {
            TaskScore::Search { retrieved, optimal } => retrieved + optimal,
            TaskScore::Counting { wrong_scoops } => wrong_scoops,
            TaskScore::Dust { dust_bottom, dust_top, replace_bottom, replace_top } => {
                [dust_bottom, dust_top, replace_bottom, replace_top].iter().filter(|b| **b).count() as u32
            }
        }
    }

    pub fn is_perfect(&self) -> bool {
        match self {
            TaskScore::Search { .. } => self.total() == 6,
            TaskScore::Counting { wrong_scoops } => *wrong_scoops == 0,
            TaskScore::Dust { .. } => self.total() == 4,
        }
    }
}

pub fn reset(task: TaskKind, seed: u64, durations: Durations) -> (WorldState, Observation) {
    let inner = match task {
        TaskKind::Search => TaskState::Search(ObjectSearchState::sample(seed)),
        TaskKind::Counting => TaskState::Counting(CountingState::sample(seed)),
        TaskKind::Dust => TaskState::Dust(DustReplaceState::sample(seed)),
    };
    let state =
        WorldState { task, seed, durations, activity: None, terminal: false, clock: 0, illegal_actions: 0, inner };
    let obs = state.observe(FrameIndex(0));
    (state, obs)
}

pub fn reset_named(task: &str, seed: u64, durations: Durations) -> Result<(WorldState, Observation), SimError> {
    let task: TaskKind = task.parse().map_err(|_| SimError::UnknownTask(task.to_string()))?;
    Ok(reset(task, seed, durations))
}

impl WorldState {
    pub fn instruction(&self) -> String {
        match &self.inner {
            TaskState::Search(s) => s.instruction(),
            TaskState::Counting(s) => s.instruction(),
            TaskState::Dust(_) => dust::INSTRUCTION.to_string(),
        }
    }

    pub fn observe(&self, index: FrameIndex) -> Observation {
        let done_cmd = self.activity.as_ref().filter(|a| a.done).map(|a| &a.subtask);
        let scene = match &self.inner {
            TaskState::Search(s) => Scene::Search(s.scene(done_cmd)),
            TaskState::Counting(s) => Scene::Counting(s.scene()),
            TaskState::Dust(s) => Scene::Dust(s.scene(done_cmd)),
        };
        let arm = match &self.activity {
            Some(a) => ArmView { at: ArmSite::of(a), busy: !a.done },
            None => ArmView::default(),
        };
        Observation { index, cameras: [CameraTag::Global, CameraTag::Wrist], arm, scene }
    }

    /// Applies one primitive action. Illegal actions leave the world unchanged
    /// and are reported in the outcome; the one-frame scoop flash expires on
    /// every call.
    pub fn step(&mut self, action: &Action) -> StepOutcome {
        if let TaskState::Counting(c) = &mut self.inner {
            c.flash = None;
        }
        let mut out = StepOutcome { terminal: self.terminal, ..Default::default() };
        if self.terminal {
            out.illegal = Some("episode finished".into());
            self.illegal_actions += 1;
            return out;
        }
        let (verb, subtask) = match action {
            Action::Noop => return out,
            Action::Step { verb, subtask } => (*verb, subtask),
        };
        if subtask.task() != self.task {
            return self.reject(out, format!("{subtask:?} is not a {} subtask", self.task));
        }
        if verb != Verb::MoveTo && verb != subtask.verb() {
            return self.reject(out, format!("verb {verb:?} cannot advance {subtask}"));
        }
        let needed = self.durations.actions(subtask);
        match &mut self.activity {
            Some(a) if &a.subtask == subtask => {
                if a.done {
                    self.clock += 1;
                    return out;
                }
                a.progress += 1;
            }
            _ => {
                if let Err(why) = self.precondition(subtask) {
                    return self.reject(out, why);
                }
                self.activity = Some(Activity { subtask: subtask.clone(), progress: 1, done: false });
                self.on_start(subtask);
            }
        }
        self.clock += 1;
        let a = self.activity.as_mut().expect("activity set above");
        if a.progress >= needed {
            a.done = true;
            let cmd = a.subtask.clone();
            self.terminal = self.on_complete(&cmd);
            out.completed = Some(cmd);
            out.terminal = self.terminal;
        }
        out
    }

    fn reject(&mut self, mut out: StepOutcome, why: String) -> StepOutcome {
        self.illegal_actions += 1;
        out.illegal = Some(why);
        out
    }

    fn precondition(&self, cmd: &SubtaskCommand) -> Result<(), String> {
        match &self.inner {
            TaskState::Search(_) => Ok(()),
            TaskState::Counting(s) => s.precondition(cmd),
            TaskState::Dust(s) => s.precondition(cmd),
        }
    }

    fn on_start(&mut self, cmd: &SubtaskCommand) {
        match &mut self.inner {
            TaskState::Search(_) => {}
            TaskState::Counting(s) => s.on_start(cmd),
            TaskState::Dust(s) => s.on_start(cmd),
        }
    }

    fn on_complete(&mut self, cmd: &SubtaskCommand) -> bool {
        let clock = self.clock;
        match &mut self.inner {
            TaskState::Search(s) => s.on_complete(cmd, clock),
            TaskState::Counting(s) => s.on_complete(cmd),
            TaskState::Dust(s) => s.on_complete(cmd),
        }
    }

    pub fn score(&self, status: EpisodeStatus) -> Result<TaskScore, SimError> {
        if status == EpisodeStatus::Running && !self.terminal {
            return Err(SimError::IncompleteEpisode);
        }
        Ok(match &self.inner {
            TaskState::Search(s) => s.score(),
            TaskState::Counting(s) => s.score(),
            TaskState::Dust(s) => s.score(),
        })
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn search(&self) -> Option<&ObjectSearchState> {
        match &self.inner {
            TaskState::Search(s) => Some(s),
            _ => None,
        }
    }

    pub fn counting(&self) -> Option<&CountingState> {
        match &self.inner {
            TaskState::Counting(s) => Some(s),
            _ => None,
        }
    }

    pub fn dust(&self) -> Option<&DustReplaceState> {
        match &self.inner {
            TaskState::Dust(s) => Some(s),
            _ => None,
        }
    }
}

pub(crate) fn task_rng(seed: u64, task: TaskKind) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let salt = match task {
        TaskKind::Search => 0x5345_4152_4348,
        TaskKind::Counting => 0x0043_4f55_4e54,
        TaskKind::Dust => 0x4455_5354,
    };
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ salt)
}
