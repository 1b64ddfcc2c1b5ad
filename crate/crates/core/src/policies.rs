//! High-level and low-level policies.
//!
//! The high-level policies are scripted reasoners over what a camera showed:
//! the recent window, the frames long-term memory selected and, for one
//! variant, a log of past subtask labels. They never see simulator state.
//! Variants differ only in which of those inputs they are allowed to read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::FrameIndex;
use crate::simenv::{
    parse_counting_instruction, parse_search_instruction, Action, ArmSite, ArmView, Bin, Bowl, DusterPose, Ingredient,
    Observation, Scene, ScooperPhase, Shelf, SubtaskCommand, Verb,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("insufficient information: {0}")]
    InsufficientInformation(String),
    #[error("unknown subtask {0:?}")]
    UnknownSubtask(String),
    #[error("cannot parse instruction {0:?}")]
    BadInstruction(String),
    #[error("empty observation window")]
    EmptyWindow,
    #[error("invalid policy spec {0:?}")]
    BadSpec(String),
}

/// Everything a high-level policy may look at for one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HlContext {
    pub tick: FrameIndex,
    pub instruction: String,
    /// Oldest first; the last entry is the current frame.
    pub window: Vec<Observation>,
    /// Frames selected by long-term memory, oldest first.
    pub keyframes: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_memory: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HlDecision {
    pub subtask: SubtaskCommand,
    /// 1-indexed positions into the presented window.
    pub nominations: Vec<usize>,
    /// Set when the policy could not decide and used the exploration prior.
    #[serde(default)]
    pub fallback: bool,
}

pub trait HlPolicy {
    /// The `--hl` spelling that rebuilds this policy.
    fn spec(&self) -> String;

    fn uses_text_memory(&self) -> bool {
        false
    }

    fn decide(&mut self, ctx: &HlContext) -> Result<HlDecision, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Oracle,
    Memoryless,
    ShortHistory,
    TextMemory,
}

impl Variant {
    pub fn spec(self) -> &'static str {
        match self {
            Variant::Oracle => "oracle",
            Variant::Memoryless => "none",
            Variant::ShortHistory => "short",
            Variant::TextMemory => "text",
        }
    }
}

/// Parsed `--hl` value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HlSpec {
    Plain(Variant),
    Noisy { jitter: u64 },
}

impl FromStr for HlSpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "oracle" => HlSpec::Plain(Variant::Oracle),
            "none" => HlSpec::Plain(Variant::Memoryless),
            "short" => HlSpec::Plain(Variant::ShortHistory),
            "text" => HlSpec::Plain(Variant::TextMemory),
            other => {
                let j = other.strip_prefix("noisy:").and_then(|j| j.parse().ok());
                HlSpec::Noisy { jitter: j.ok_or_else(|| PolicyError::BadSpec(other.to_string()))? }
            }
        })
    }
}

impl fmt::Display for HlSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HlSpec::Plain(v) => f.write_str(v.spec()),
            HlSpec::Noisy { jitter } => write!(f, "noisy:{jitter}"),
        }
    }
}

impl HlSpec {
    pub fn build(self, seed: u64) -> Box<dyn HlPolicy> {
        match self {
            HlSpec::Plain(v) => Box::new(ScriptedHl::new(v)),
            HlSpec::Noisy { jitter } => Box::new(NoisyNominator::new(ScriptedHl::new(Variant::Oracle), jitter, seed)),
        }
    }
}

/// What a variant is allowed to see.
struct View<'a> {
    /// Keyframes then visible window frames, oldest first.
    frames: Vec<&'a Observation>,
    /// Visible window frames with their 1-indexed window positions.
    window: Vec<(usize, &'a Observation)>,
    now: &'a Observation,
    text: Vec<SubtaskCommand>,
}

impl<'a> View<'a> {
    fn new(ctx: &'a HlContext, variant: Variant) -> Result<Self, PolicyError> {
        let now = ctx.window.last().ok_or(PolicyError::EmptyWindow)?;
        let positioned: Vec<(usize, &Observation)> = ctx.window.iter().enumerate().map(|(i, o)| (i + 1, o)).collect();
        let window = match variant {
            Variant::Memoryless => vec![*positioned.last().expect("non-empty")],
            _ => positioned,
        };
        let mut frames: Vec<&Observation> = Vec::new();
        if variant == Variant::Oracle {
            frames.extend(ctx.keyframes.iter());
        }
        frames.extend(window.iter().map(|(_, o)| *o));
        let text = match (variant, &ctx.text_memory) {
            (Variant::TextMemory, Some(labels)) => labels.iter().filter_map(|l| l.parse().ok()).collect(),
            _ => Vec::new(),
        };
        Ok(View { frames, window, now, text })
    }

    /// Last frame of every run of memorable content inside the window.
    fn nominations(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, (pos, o)) in self.window.iter().enumerate() {
            let Some(key) = memorable(o) else { continue };
            let run_continues = self
                .window
                .get(i + 1)
                .is_some_and(|(_, next)| next.index.0 == o.index.0 + 1 && memorable(next).as_ref() == Some(&key));
            if !run_continues {
                out.push(*pos);
            }
        }
        out
    }
}

/// Content worth keeping: a completed look, pour, stroke, removal or placement.
fn memorable(o: &Observation) -> Option<String> {
    match &o.scene {
        Scene::Search(s) => s.open_bin.as_ref().map(|b| format!("open {}", b.bin)),
        Scene::Counting(c) => c.scoop_completed.map(|(i, b)| format!("poured {i} {b}")),
        Scene::Dust(d) => {
            if let Some((s, obj)) = &d.removed_from {
                Some(format!("removed {obj} {s}"))
            } else if let DusterPose::Stroked(s) = d.duster {
                Some(format!("stroked {s}"))
            } else {
                d.placed_on.as_ref().map(|(s, obj)| format!("placed {obj} {s}"))
            }
        }
    }
}

fn decide_with(ctx: &HlContext, variant: Variant) -> Result<HlDecision, PolicyError> {
    let view = View::new(ctx, variant)?;
    let subtask = match &view.now.scene {
        Scene::Search(_) => search_step(&ctx.instruction, &view)?,
        Scene::Counting(_) => counting_step(&ctx.instruction, &view)?,
        Scene::Dust(_) => dust_step(&view)?,
    };
    Ok(HlDecision { subtask, nominations: view.nominations(), fallback: false })
}

/// Memory-equipped reasoner: reads window and keyframes.
pub fn oracle_hl(ctx: &HlContext) -> Result<HlDecision, PolicyError> {
    decide_with(ctx, Variant::Oracle)
}

/// Reads only the newest frame.
pub fn memoryless_hl(ctx: &HlContext) -> Result<HlDecision, PolicyError> {
    decide_with(ctx, Variant::Memoryless)
}

/// Reads the recent window only.
pub fn short_history_hl(ctx: &HlContext) -> Result<HlDecision, PolicyError> {
    decide_with(ctx, Variant::ShortHistory)
}

/// Reads the recent window plus the log of past subtask labels.
pub fn text_memory_hl(ctx: &HlContext) -> Result<HlDecision, PolicyError> {
    decide_with(ctx, Variant::TextMemory)
}

/// Exploration prior used when a reasoner cannot decide.
pub fn exploration_prior(ctx: &HlContext) -> Result<SubtaskCommand, PolicyError> {
    let view = View::new(ctx, Variant::ShortHistory)?;
    Ok(match &view.now.scene {
        Scene::Search(_) => {
            let last_open = view.frames.iter().rev().find_map(|o| o.search()?.open_bin.as_ref().map(|b| b.bin));
            let next = match last_open {
                Some(b) => Bin::ALL[(Bin::ALL.iter().position(|x| *x == b).expect("known bin") + 1) % Bin::ALL.len()],
                None => Bin::Left,
            };
            SubtaskCommand::LookInside(next)
        }
        Scene::Counting(_) => SubtaskCommand::DropScooper,
        Scene::Dust(d) => {
            let shelf = Shelf::ALL.iter().copied().find(|s| d.shelves[s].is_none()).unwrap_or(Shelf::Bottom);
            let object = d.table.iter().next().cloned().unwrap_or_default();
            SubtaskCommand::PlaceObject { object, shelf }
        }
    })
}

fn search_step(instruction: &str, view: &View) -> Result<SubtaskCommand, PolicyError> {
    let target =
        parse_search_instruction(instruction).ok_or_else(|| PolicyError::BadInstruction(instruction.into()))?;
    let opened: Vec<(FrameIndex, Bin, bool)> = view
        .frames
        .iter()
        .filter_map(|o| o.search()?.open_bin.as_ref().map(|b| (o.index, b.bin, b.contents.contains(target))))
        .collect();
    if let Some((_, bin, _)) = opened.iter().rev().find(|(_, _, has)| *has) {
        return Ok(SubtaskCommand::Take { object: target.to_string(), bin: *bin });
    }
    match view.now.arm {
        ArmView { at: ArmSite::Bin(b), busy: true } => return Ok(SubtaskCommand::LookInside(b)),
        ArmView { at: ArmSite::InBin(bin), busy: true } => {
            return Ok(SubtaskCommand::Take { object: target.to_string(), bin });
        }
        _ => {}
    }
    let mut seen: BTreeSet<Bin> = opened.iter().map(|(_, b, _)| *b).collect();
    seen.extend(view.text.iter().filter_map(|c| match c {
        SubtaskCommand::LookInside(b) => Some(*b),
        _ => None,
    }));
    let latest = opened.iter().max_by_key(|(i, _, _)| *i).map(|(_, b, _)| *b);
    let after = latest.map_or(0, |b| Bin::ALL.iter().position(|x| *x == b).expect("known bin") + 1);
    Bin::ALL[after..]
        .iter()
        .chain(Bin::ALL.iter())
        .find(|b| !seen.contains(b))
        .map(|b| SubtaskCommand::LookInside(*b))
        .ok_or_else(|| PolicyError::InsufficientInformation(format!("{target} not in any remembered bin")))
}

fn counting_step(instruction: &str, view: &View) -> Result<SubtaskCommand, PolicyError> {
    let requests =
        parse_counting_instruction(instruction).ok_or_else(|| PolicyError::BadInstruction(instruction.into()))?;
    let c = view.now.counting().expect("counting scene");
    if !c.scooper_held {
        return Ok(SubtaskCommand::PickUpScooper);
    }
    match c.scooper {
        ScooperPhase::Poured | ScooperPhase::Resetting => return Ok(SubtaskCommand::ResetScooper),
        ScooperPhase::Scooping => {
            let ArmSite::Bowl(bowl) = view.now.arm.at else {
                return Err(PolicyError::InsufficientInformation("scooping away from a bowl".into()));
            };
            let (ingredient, ..) = requests
                .iter()
                .find(|(_, b, _)| *b == bowl)
                .ok_or_else(|| PolicyError::InsufficientInformation(format!("no request for the {bowl} bowl")))?;
            return Ok(SubtaskCommand::PlaceScoop { ingredient: *ingredient, bowl });
        }
        ScooperPhase::Idle => {}
    }
    let mut done: BTreeMap<(Ingredient, Bowl), u32> = BTreeMap::new();
    if view.text.is_empty() {
        for pair in view.frames.iter().filter_map(|o| o.counting()?.scoop_completed) {
            *done.entry(pair).or_default() += 1;
        }
    } else {
        // one label per scoop: consecutive repeats were already collapsed
        for c in &view.text {
            if let SubtaskCommand::PlaceScoop { ingredient, bowl } = c {
                *done.entry((*ingredient, *bowl)).or_default() += 1;
            }
        }
    }
    Ok(requests
        .iter()
        .find(|(i, b, n)| done.get(&(*i, *b)).copied().unwrap_or(0) < *n)
        .map(|(i, b, _)| SubtaskCommand::PlaceScoop { ingredient: *i, bowl: *b })
        .unwrap_or(SubtaskCommand::DropScooper))
}

fn dust_step(view: &View) -> Result<SubtaskCommand, PolicyError> {
    let d = view.now.dust().expect("dust scene");
    let mut dusted: BTreeSet<Shelf> = view
        .frames
        .iter()
        .filter_map(|o| match o.dust()?.duster {
            DusterPose::Stroked(s) => Some(s),
            _ => None,
        })
        .collect();
    dusted.extend(view.text.iter().filter_map(|c| match c {
        SubtaskCommand::DustShelf(s) => Some(*s),
        _ => None,
    }));
    let all_dusted = Shelf::ALL.iter().all(|s| dusted.contains(s));
    let next_dust = || Shelf::ALL.iter().copied().find(|s| !dusted.contains(s));
    use SubtaskCommand::*;
    if d.duster_held {
        return Ok(match d.duster {
            DusterPose::Dusting(s) => DustShelf(s),
            DusterPose::Returning if view.now.arm.at == ArmSite::DusterStand => PutDownDuster,
            DusterPose::Returning => ResetDuster,
            DusterPose::Stroked(_) if all_dusted => PutDownDuster,
            DusterPose::Stroked(_) => ResetDuster,
            DusterPose::Neutral | DusterPose::Parked => next_dust().map_or(PutDownDuster, DustShelf),
        });
    }
    let occupied = |s: Shelf| d.shelves[&s].is_some();
    if d.table.is_empty() && occupied(Shelf::Bottom) && occupied(Shelf::Top) {
        return Ok(RemoveObject(Shelf::Bottom));
    }
    if !occupied(Shelf::Bottom) && occupied(Shelf::Top) {
        return Ok(RemoveObject(Shelf::Top));
    }
    if d.table.is_empty() {
        return Err(PolicyError::InsufficientInformation("nothing left to place".into()));
    }
    if !all_dusted {
        return Ok(PickUpDuster);
    }
    let shelf = Shelf::ALL.iter().copied().find(|s| !occupied(*s)).expect("table object implies an empty shelf");
    let origin = view.frames.iter().rev().find_map(|o| match &o.dust()?.removed_from {
        Some((s, obj)) if *s == shelf => Some(obj.clone()),
        _ => None,
    });
    match origin {
        Some(object) if d.table.contains(&object) => Ok(PlaceObject { object, shelf }),
        _ => Err(PolicyError::InsufficientInformation(format!("which object came off the {shelf} shelf"))),
    }
}

/// One of the scripted variants, falling back to the exploration prior when
/// its inputs do not settle the decision.
#[derive(Debug, Clone)]
pub struct ScriptedHl {
    pub variant: Variant,
}

impl ScriptedHl {
    pub fn new(variant: Variant) -> Self {
        ScriptedHl { variant }
    }
}

impl HlPolicy for ScriptedHl {
    fn spec(&self) -> String {
        self.variant.spec().to_string()
    }

    fn uses_text_memory(&self) -> bool {
        self.variant == Variant::TextMemory
    }

    fn decide(&mut self, ctx: &HlContext) -> Result<HlDecision, PolicyError> {
        match decide_with(ctx, self.variant) {
            Err(PolicyError::InsufficientInformation(_)) => {
                let view = View::new(ctx, self.variant)?;
                Ok(HlDecision { subtask: exploration_prior(ctx)?, nominations: view.nominations(), fallback: true })
            }
            other => other,
        }
    }
}

/// Perturbs every nominated position uniformly within `±jitter`, clamped to
/// the window.
pub struct NoisyNominator<P> {
    inner: P,
    jitter: u64,
    rng: ChaCha8Rng,
}

impl<P: HlPolicy> NoisyNominator<P> {
    pub fn new(inner: P, jitter: u64, seed: u64) -> Self {
        NoisyNominator { inner, jitter, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x006e_6f69_7379) }
    }

    pub fn perturb(&mut self, positions: &[usize], window_len: usize) -> Vec<usize> {
        let j = self.jitter as i64;
        positions
            .iter()
            .map(|p| {
                let shift = if j == 0 { 0 } else { self.rng.gen_range(-j..=j) };
                (*p as i64 + shift).clamp(1, window_len as i64) as usize
            })
            .collect()
    }
}

impl<P: HlPolicy> HlPolicy for NoisyNominator<P> {
    fn spec(&self) -> String {
        format!("noisy:{}", self.jitter)
    }

    fn uses_text_memory(&self) -> bool {
        self.inner.uses_text_memory()
    }

    fn decide(&mut self, ctx: &HlContext) -> Result<HlDecision, PolicyError> {
        let mut d = self.inner.decide(ctx)?;
        d.nominations = self.perturb(&d.nominations, ctx.window.len());
        Ok(d)
    }
}

/// Chance that a low-level chunk freezes instead of making progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureProfile {
    pub default_p: f64,
    /// Overrides keyed by subtask template.
    #[serde(default)]
    pub per_subtask: BTreeMap<String, f64>,
    pub max_consecutive: u32,
    pub seed: u64,
}

impl FailureProfile {
    pub fn none() -> Self {
        FailureProfile::uniform(0.0, 0)
    }

    pub fn uniform(p: f64, seed: u64) -> Self {
        FailureProfile { default_p: p, per_subtask: BTreeMap::new(), max_consecutive: 3, seed }
    }

    pub fn probability(&self, cmd: &SubtaskCommand) -> f64 {
        self.per_subtask.get(cmd.template()).copied().unwrap_or(self.default_p)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if ok(self.default_p) && self.per_subtask.values().all(|p| ok(*p)) {
            Ok(())
        } else {
            Err("failure probabilities must lie in [0, 1]".into())
        }
    }
}

pub trait LlPolicy {
    fn chunk(&mut self, subtask: &SubtaskCommand, obs: &Observation, len: usize) -> Vec<Action>;
}

/// Emits `len` actions that advance the subtask, or a frozen chunk of no-ops
/// with the profile's probability.
pub struct ScriptedLl {
    profile: FailureProfile,
    rng: ChaCha8Rng,
    consecutive: u32,
    pub failed_last: bool,
}

impl ScriptedLl {
    pub fn new(profile: FailureProfile) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(profile.seed ^ 0x6c6c);
        ScriptedLl { profile, rng, consecutive: 0, failed_last: false }
    }

    pub fn chunk_for_label(&mut self, label: &str, obs: &Observation, len: usize) -> Result<Vec<Action>, PolicyError> {
        let cmd: SubtaskCommand = label.parse().map_err(|_| PolicyError::UnknownSubtask(label.to_string()))?;
        Ok(self.chunk(&cmd, obs, len))
    }
}

impl LlPolicy for ScriptedLl {
    fn chunk(&mut self, subtask: &SubtaskCommand, _obs: &Observation, len: usize) -> Vec<Action> {
        let p = self.profile.probability(subtask);
        let fail = p > 0.0 && self.consecutive < self.profile.max_consecutive && self.rng.gen_bool(p);
        self.failed_last = fail;
        if fail {
            self.consecutive += 1;
            return vec![Action::Noop; len];
        }
        self.consecutive = 0;
        (0..len)
            .map(|i| Action::Step {
                verb: if i == 0 { Verb::MoveTo } else { subtask.verb() },
                subtask: subtask.clone(),
            })
            .collect()
    }
}
