use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grammar::{Shelf, SubtaskCommand, TaskKind, SHELF_OBJECTS};
use super::{task_rng, TaskScore};

pub const INSTRUCTION: &str =
    "remove the items from the shelves, dust the shelves, and place the items back on the shelves";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pose", content = "shelf", rename_all = "snake_case")]
pub enum DusterPose {
    /// On its stand.
    Parked,
    /// Held at the ambiguous hover pose; looks the same whatever has been dusted.
    Neutral,
    Dusting(Shelf),
    /// Moving back to the hover pose.
    Returning,
    /// Stroke finished on this shelf; lasts until the duster moves on.
    Stroked(Shelf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DustReplaceState {
    pub original_layout: BTreeMap<Shelf, String>,
    pub shelves: BTreeMap<Shelf, Option<String>>,
    pub table: BTreeSet<String>,
    pub removed: BTreeMap<Shelf, bool>,
    /// Which object was taken off each shelf.
    pub removed_objects: BTreeMap<Shelf, String>,
    pub dusted: BTreeMap<Shelf, bool>,
    pub duster_held: bool,
    pub duster: DusterPose,
    pub replaced_correctly: BTreeMap<Shelf, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DustScene {
    pub shelves: BTreeMap<Shelf, Option<String>>,
    pub table: BTreeSet<String>,
    pub duster_held: bool,
    pub duster: DusterPose,
    pub removed_from: Option<(Shelf, String)>,
    pub placed_on: Option<(Shelf, String)>,
}

impl DustReplaceState {
    pub fn sample(seed: u64) -> Self {
        let mut rng = task_rng(seed, TaskKind::Dust);
        let picks: Vec<&str> = SHELF_OBJECTS.choose_multiple(&mut rng, 2).copied().collect();
        let original_layout: BTreeMap<Shelf, String> =
            [(Shelf::Bottom, picks[0].to_string()), (Shelf::Top, picks[1].to_string())].into_iter().collect();
        let all_false: BTreeMap<Shelf, bool> = Shelf::ALL.iter().map(|s| (*s, false)).collect();
        DustReplaceState {
            shelves: original_layout.iter().map(|(s, o)| (*s, Some(o.clone()))).collect(),
            original_layout,
            table: BTreeSet::new(),
            removed: all_false.clone(),
            removed_objects: BTreeMap::new(),
            dusted: all_false.clone(),
            duster_held: false,
            duster: DusterPose::Parked,
            replaced_correctly: all_false,
        }
    }

    pub(super) fn scene(&self, done: Option<&SubtaskCommand>) -> DustScene {
        let removed_from = match done {
            Some(SubtaskCommand::RemoveObject(s)) => self.removed_objects.get(s).map(|o| (*s, o.clone())),
            _ => None,
        };
        let placed_on = match done {
            Some(SubtaskCommand::PlaceObject { object, shelf }) => Some((*shelf, object.clone())),
            _ => None,
        };
        DustScene {
            shelves: self.shelves.clone(),
            table: self.table.clone(),
            duster_held: self.duster_held,
            duster: self.duster,
            removed_from,
            placed_on,
        }
    }

    pub(super) fn precondition(&self, cmd: &SubtaskCommand) -> Result<(), String> {
        use SubtaskCommand::*;
        let ok = match cmd {
            RemoveObject(s) => !self.removed[s] && self.shelves[s].is_some() && !self.duster_held,
            PickUpDuster => !self.duster_held,
            DustShelf(_) => self.duster_held && self.duster == DusterPose::Neutral,
            ResetDuster => self.duster_held && matches!(self.duster, DusterPose::Dusting(_) | DusterPose::Stroked(_)),
            PutDownDuster => self.duster_held,
            PlaceObject { object, shelf } => {
                !self.duster_held && self.table.contains(object) && self.shelves[shelf].is_none()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("cannot {cmd} in current layout"))
        }
    }

    pub(super) fn on_start(&mut self, cmd: &SubtaskCommand) {
        match cmd {
            SubtaskCommand::DustShelf(s) => self.duster = DusterPose::Dusting(*s),
            SubtaskCommand::ResetDuster | SubtaskCommand::PutDownDuster => self.duster = DusterPose::Returning,
            _ => {}
        }
    }

    pub(super) fn on_complete(&mut self, cmd: &SubtaskCommand) -> bool {
        use SubtaskCommand::*;
        match cmd {
            RemoveObject(s) => {
                if let Some(o) = self.shelves.get_mut(s).and_then(Option::take) {
                    self.table.insert(o.clone());
                    self.removed_objects.insert(*s, o);
                }
                self.removed.insert(*s, true);
            }
            PickUpDuster => {
                self.duster_held = true;
                self.duster = DusterPose::Neutral;
            }
            DustShelf(s) => {
                self.dusted.insert(*s, true);
                self.duster = DusterPose::Stroked(*s);
            }
            ResetDuster => self.duster = DusterPose::Neutral,
            PutDownDuster => {
                self.duster_held = false;
                self.duster = DusterPose::Parked;
            }
            PlaceObject { object, shelf } => {
                self.table.remove(object);
                self.replaced_correctly.insert(*shelf, self.original_layout[shelf] == *object);
                self.shelves.insert(*shelf, Some(object.clone()));
            }
            _ => {}
        }
        self.removed.values().all(|r| *r) && self.shelves.values().all(Option::is_some) && !self.duster_held
    }

    pub(super) fn score(&self) -> TaskScore {
        TaskScore::Dust {
            dust_bottom: self.dusted[&Shelf::Bottom],
            dust_top: self.dusted[&Shelf::Top],
            replace_bottom: self.replaced_correctly[&Shelf::Bottom],
            replace_top: self.replaced_correctly[&Shelf::Top],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::run_subtask;
    use super::super::*;
    use super::*;

    fn nominal_sequence(layout: &BTreeMap<Shelf, String>) -> Vec<SubtaskCommand> {
        use SubtaskCommand::*;
        vec![
            RemoveObject(Shelf::Bottom),
            RemoveObject(Shelf::Top),
            PickUpDuster,
            DustShelf(Shelf::Bottom),
            ResetDuster,
            DustShelf(Shelf::Top),
            PutDownDuster,
            PlaceObject { object: layout[&Shelf::Bottom].clone(), shelf: Shelf::Bottom },
            PlaceObject { object: layout[&Shelf::Top].clone(), shelf: Shelf::Top },
        ]
    }

    #[test]
    fn nominal_run_scores_four() {
        let (mut s, _) = reset(TaskKind::Dust, 8, Durations::default());
        let layout = s.dust().unwrap().original_layout.clone();
        let seq = nominal_sequence(&layout);
        for (i, cmd) in seq.iter().enumerate() {
            let out = run_subtask(&mut s, cmd);
            assert_eq!(out.terminal, i == seq.len() - 1);
        }
        assert_eq!(s.score(EpisodeStatus::Terminal).unwrap().total(), 4);
    }

    #[test]
    fn neutral_pose_hides_dust_progress() {
        let (mut s, _) = reset(TaskKind::Dust, 8, Durations::default());
        let layout = s.dust().unwrap().original_layout.clone();
        let seq = nominal_sequence(&layout);
        let mut neutral_views = Vec::new();
        for cmd in &seq[..5] {
            run_subtask(&mut s, cmd);
            if s.dust().unwrap().duster == DusterPose::Neutral {
                neutral_views.push(s.observe(FrameIndex(0)));
            }
        }
        // after pick up (nothing dusted) and after reset (bottom dusted)
        assert_eq!(neutral_views.len(), 2);
        assert_eq!(neutral_views[0], neutral_views[1]);
    }

    #[test]
    fn dust_then_park_leaks_nothing() {
        let (mut s, _) = reset(TaskKind::Dust, 13, Durations::default());
        let layout = s.dust().unwrap().original_layout.clone();
        let seq = nominal_sequence(&layout);
        for cmd in &seq[..4] {
            run_subtask(&mut s, cmd);
        }
        // every frame from the reset onwards must not mention a dusted shelf
        let reset_cmd = &seq[4];
        for _ in 0..s.durations.actions(reset_cmd) {
            s.step(&Action::Step { verb: reset_cmd.verb(), subtask: reset_cmd.clone() });
            let o = s.observe(FrameIndex(0));
            let json = serde_json::to_string(o.dust().unwrap()).unwrap();
            assert!(!json.contains("stroked") && !json.contains("dusting"), "{json}");
        }
    }

    #[test]
    fn placing_requires_object_on_table() {
        let (mut s, _) = reset(TaskKind::Dust, 1, Durations::default());
        let obj = s.dust().unwrap().original_layout[&Shelf::Bottom].clone();
        let out = s.step(&Action::Step {
            verb: Verb::Place,
            subtask: SubtaskCommand::PlaceObject { object: obj, shelf: Shelf::Bottom },
        });
        assert!(out.illegal.is_some());
    }

    #[test]
    fn swapped_placement_scores_two() {
        let (mut s, _) = reset(TaskKind::Dust, 8, Durations::default());
        let layout = s.dust().unwrap().original_layout.clone();
        let mut seq = nominal_sequence(&layout);
        let n = seq.len();
        seq[n - 2] = SubtaskCommand::PlaceObject { object: layout[&Shelf::Top].clone(), shelf: Shelf::Bottom };
        seq[n - 1] = SubtaskCommand::PlaceObject { object: layout[&Shelf::Bottom].clone(), shelf: Shelf::Top };
        for cmd in &seq {
            run_subtask(&mut s, cmd);
        }
        assert_eq!(
            s.score(EpisodeStatus::Terminal).unwrap(),
            TaskScore::Dust { dust_bottom: true, dust_top: true, replace_bottom: false, replace_top: false }
        );
    }
}
