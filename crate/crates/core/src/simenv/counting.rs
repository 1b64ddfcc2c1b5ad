use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{number_word, parse_number_word, Bowl, Ingredient, SubtaskCommand, TaskKind};
use super::{task_rng, TaskScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScooperPhase {
    /// On the table or held at its rest pose.
    Idle,
    Scooping,
    /// Just poured; must be reset before the next scoop.
    Poured,
    Resetting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoopTally {
    pub ingredient: Ingredient,
    pub bowl: Bowl,
    pub requested: u32,
    pub completed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingState {
    /// Requested pairs first, in instruction order; unrequested pairs appear
    /// with `requested == 0` once scooped.
    pub tallies: Vec<ScoopTally>,
    pub scooper_held: bool,
    pub phase: ScooperPhase,
    /// Pair poured by the most recent step, visible for one frame.
    pub flash: Option<(Ingredient, Bowl)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingScene {
    pub scooper_held: bool,
    pub scooper: ScooperPhase,
    pub scoop_completed: Option<(Ingredient, Bowl)>,
}

impl CountingState {
    pub fn sample(seed: u64) -> Self {
        let mut rng = task_rng(seed, TaskKind::Counting);
        let peanut_bowl = if rng.gen_bool(0.5) { Bowl::Green } else { Bowl::Blue };
        let other = if peanut_bowl == Bowl::Green { Bowl::Blue } else { Bowl::Green };
        let tallies = vec![
            ScoopTally {
                ingredient: Ingredient::Peanuts,
                bowl: peanut_bowl,
                requested: rng.gen_range(1..=4),
                completed: 0,
            },
            ScoopTally {
                ingredient: Ingredient::JellyBeans,
                bowl: other,
                requested: rng.gen_range(1..=4),
                completed: 0,
            },
        ];
        CountingState { tallies, scooper_held: false, phase: ScooperPhase::Idle, flash: None }
    }

    pub fn requests(&self) -> impl Iterator<Item = &ScoopTally> {
        self.tallies.iter().filter(|t| t.requested > 0)
    }

    pub fn instruction(&self) -> String {
        let parts: Vec<String> = self
            .requests()
            .map(|t| {
                let noun = if t.requested == 1 { "scoop" } else { "scoops" };
                format!("{} {noun} of {} and put it in the {} bowl", number_word(t.requested), t.ingredient, t.bowl)
            })
            .collect();
        format!("get {}", parts.join(", and "))
    }

    pub(super) fn scene(&self) -> CountingScene {
        CountingScene { scooper_held: self.scooper_held, scooper: self.phase, scoop_completed: self.flash }
    }

    pub(super) fn precondition(&self, cmd: &SubtaskCommand) -> Result<(), String> {
        use SubtaskCommand::*;
        let ok = match cmd {
            PickUpScooper => !self.scooper_held,
            PlaceScoop { .. } | DropScooper => self.scooper_held && self.phase == ScooperPhase::Idle,
            ResetScooper => self.scooper_held && self.phase != ScooperPhase::Idle,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("cannot {cmd} (held: {}, phase: {:?})", self.scooper_held, self.phase))
        }
    }

    pub(super) fn on_start(&mut self, cmd: &SubtaskCommand) {
        match cmd {
            SubtaskCommand::PlaceScoop { .. } => self.phase = ScooperPhase::Scooping,
            SubtaskCommand::ResetScooper => self.phase = ScooperPhase::Resetting,
            _ => {}
        }
    }

    pub(super) fn on_complete(&mut self, cmd: &SubtaskCommand) -> bool {
        match cmd {
            SubtaskCommand::PickUpScooper => {
                self.scooper_held = true;
                self.phase = ScooperPhase::Idle;
            }
            SubtaskCommand::PlaceScoop { ingredient, bowl } => {
                self.phase = ScooperPhase::Poured;
                self.flash = Some((*ingredient, *bowl));
                match self.tallies.iter_mut().find(|t| t.ingredient == *ingredient && t.bowl == *bowl) {
                    Some(t) => t.completed += 1,
                    None => self.tallies.push(ScoopTally {
                        ingredient: *ingredient,
                        bowl: *bowl,
                        requested: 0,
                        completed: 1,
                    }),
                }
            }
            SubtaskCommand::ResetScooper => self.phase = ScooperPhase::Idle,
            SubtaskCommand::DropScooper => {
                self.scooper_held = false;
                return true;
            }
            _ => {}
        }
        false
    }

    pub(super) fn score(&self) -> TaskScore {
        let wrong_scoops = self.tallies.iter().map(|t| t.requested.abs_diff(t.completed)).sum();
        TaskScore::Counting { wrong_scoops }
    }
}

/// Parses a counting instruction into `(ingredient, bowl, scoops)` requests.
pub fn parse_counting_instruction(instruction: &str) -> Option<Vec<(Ingredient, Bowl, u32)>> {
    let body = instruction.strip_prefix("get ")?;
    body.split(", and ")
        .map(|part| {
            let (count, rest) = part.split_once(' ')?;
            let n = parse_number_word(count)?;
            let rest = rest.strip_prefix("scoops of ").or_else(|| rest.strip_prefix("scoop of "))?;
            let (ing, bowl) = rest.split_once(" and put it in the ")?;
            let bowl = bowl.strip_suffix(" bowl")?;
            Some((Ingredient::from_word(ing)?, Bowl::from_word(bowl)?, n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::tests::run_subtask;
    use super::super::*;
    use super::*;

    #[test]
    fn instruction_parses_back() {
        for seed in 0..100 {
            let s = CountingState::sample(seed);
            let parsed = parse_counting_instruction(&s.instruction()).unwrap();
            let expected: Vec<_> = s.requests().map(|t| (t.ingredient, t.bowl, t.requested)).collect();
            assert_eq!(parsed, expected);
        }
        let p = parse_counting_instruction(
            "get three scoops of peanuts and put it in the green bowl, and two scoops of jelly beans and put it in the blue bowl",
        )
        .unwrap();
        assert_eq!(p, vec![(Ingredient::Peanuts, Bowl::Green, 3), (Ingredient::JellyBeans, Bowl::Blue, 2)]);
    }

    #[test]
    fn pour_without_scooper_is_illegal() {
        let (mut s, _) = reset(TaskKind::Counting, 1, Durations::default());
        let before = s.clone();
        let cmd = SubtaskCommand::PlaceScoop { ingredient: Ingredient::Peanuts, bowl: Bowl::Green };
        let out = s.step(&Action::Step { verb: Verb::Pour, subtask: cmd });
        assert!(out.illegal.is_some());
        assert_eq!(s.inner, before.inner);
    }

    #[test]
    fn scoop_visible_only_in_completion_frame() {
        let (mut s, _) = reset(TaskKind::Counting, 2, Durations::default());
        let t = s.counting().unwrap().tallies[0].clone();
        let cmd = SubtaskCommand::PlaceScoop { ingredient: t.ingredient, bowl: t.bowl };
        run_subtask(&mut s, &SubtaskCommand::PickUpScooper);
        let mut flashes = Vec::new();
        let n = s.durations.actions(&cmd);
        for i in 0..n + 3 {
            // stale repetitions after the pour are illegal and must not add scoops
            s.step(&Action::Step { verb: Verb::Pour, subtask: cmd.clone() });
            if s.observe(FrameIndex(i as u64)).counting().unwrap().scoop_completed.is_some() {
                flashes.push(i);
            }
        }
        assert_eq!(flashes, vec![n - 1]);
        assert_eq!(s.counting().unwrap().tallies[0].completed, 1);
    }

    #[test]
    fn exact_requests_score_zero() {
        let (mut s, _) = reset(TaskKind::Counting, 4, Durations::default());
        let tallies = s.counting().unwrap().tallies.clone();
        run_subtask(&mut s, &SubtaskCommand::PickUpScooper);
        for t in &tallies {
            for _ in 0..t.requested {
                run_subtask(&mut s, &SubtaskCommand::PlaceScoop { ingredient: t.ingredient, bowl: t.bowl });
                run_subtask(&mut s, &SubtaskCommand::ResetScooper);
            }
        }
        let out = run_subtask(&mut s, &SubtaskCommand::DropScooper);
        assert!(out.terminal);
        assert_eq!(s.score(EpisodeStatus::Terminal).unwrap(), TaskScore::Counting { wrong_scoops: 0 });
    }

    #[test]
    fn extra_and_wrong_bowl_scoops_count() {
        let mut c = CountingState::sample(0);
        c.tallies[0].requested = 3;
        c.tallies[1].requested = 2;
        c.tallies[0].completed = 3;
        c.tallies[1].completed = 2;
        assert_eq!(c.score(), TaskScore::Counting { wrong_scoops: 0 });
        c.tallies[0].completed = 5;
        c.tallies.push(ScoopTally {
            ingredient: Ingredient::Peanuts,
            bowl: c.tallies[1].bowl,
            requested: 0,
            completed: 1,
        });
        assert_eq!(c.score(), TaskScore::Counting { wrong_scoops: 3 });
    }
}
