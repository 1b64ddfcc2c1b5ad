use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{Bin, SubtaskCommand, TaskKind, SEARCH_OBJECTS};
use super::{task_rng, TaskScore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAttempt {
    pub target: String,
    pub bin: Bin,
    pub retrieved: bool,
    pub looks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSearchState {
    pub bin_contents: BTreeMap<Bin, BTreeSet<String>>,
    /// Bin → simulator clock of its last completed inspection.
    pub inspected: BTreeMap<Bin, u64>,
    pub instruction_queue: Vec<String>,
    pub current: usize,
    pub retrieved: BTreeSet<String>,
    /// Completed looks per instruction.
    pub look_counter: Vec<u32>,
    /// Bins already inspected when each instruction was issued.
    pub inspected_at_start: Vec<BTreeSet<Bin>>,
    /// Where each target sat when the episode started.
    pub initial_location: BTreeMap<String, Bin>,
    pub attempts: Vec<SearchAttempt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinView {
    pub bin: Bin,
    pub contents: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchScene {
    /// Contents of the bin being looked into, once the look has completed.
    pub open_bin: Option<BinView>,
    pub placed_in_white_bin: Option<String>,
}

/// Looks needed before the target can be taken, following the
/// left → center → right prior and skipping inspected bins.
pub fn min_looks(inspected: &BTreeSet<Bin>, target_bin: Bin) -> u32 {
    if inspected.contains(&target_bin) {
        return 0;
    }
    Bin::ALL.iter().take_while(|b| **b != target_bin).filter(|b| !inspected.contains(b)).count() as u32 + 1
}

impl ObjectSearchState {
    pub fn sample(seed: u64) -> Self {
        let mut rng = task_rng(seed, TaskKind::Search);
        let n = rng.gen_range(3..=5);
        let objects: Vec<&str> = SEARCH_OBJECTS.choose_multiple(&mut rng, n).copied().collect();
        let mut bin_contents: BTreeMap<Bin, BTreeSet<String>> =
            Bin::ALL.iter().map(|b| (*b, BTreeSet::new())).collect();
        let mut initial_location = BTreeMap::new();
        for o in &objects {
            let bin = *Bin::ALL.choose(&mut rng).expect("three bins");
            bin_contents.get_mut(&bin).unwrap().insert(o.to_string());
            initial_location.insert(o.to_string(), bin);
        }
        let mut targets: Vec<String> = objects.choose_multiple(&mut rng, 3).map(|s| s.to_string()).collect();
        targets.shuffle(&mut rng);
        let initial_location = initial_location.into_iter().filter(|(o, _)| targets.contains(o)).collect();
        ObjectSearchState {
            bin_contents,
            inspected: BTreeMap::new(),
            instruction_queue: targets,
            current: 0,
            retrieved: BTreeSet::new(),
            look_counter: vec![0],
            inspected_at_start: vec![BTreeSet::new()],
            initial_location,
            attempts: Vec::new(),
        }
    }

    pub fn current_target(&self) -> Option<&str> {
        self.instruction_queue.get(self.current).map(String::as_str)
    }

    pub fn instruction(&self) -> String {
        let target = self.current_target().or(self.instruction_queue.last().map(String::as_str)).unwrap_or("object");
        search_instruction(target)
    }

    pub(super) fn scene(&self, done: Option<&SubtaskCommand>) -> SearchScene {
        match done {
            Some(SubtaskCommand::LookInside(bin)) => SearchScene {
                open_bin: Some(BinView { bin: *bin, contents: self.bin_contents[bin].clone() }),
                placed_in_white_bin: None,
            },
            Some(SubtaskCommand::Take { object, .. }) if self.retrieved.contains(object) => {
                SearchScene { open_bin: None, placed_in_white_bin: Some(object.clone()) }
            }
            _ => SearchScene::default(),
        }
    }

    pub(super) fn on_complete(&mut self, cmd: &SubtaskCommand, clock: u64) -> bool {
        match cmd {
            SubtaskCommand::LookInside(bin) => {
                self.inspected.insert(*bin, clock);
                if let Some(c) = self.look_counter.get_mut(self.current) {
                    *c += 1;
                }
                false
            }
            SubtaskCommand::Take { object, bin } => {
                let Some(target) = self.current_target().map(str::to_string) else { return true };
                let present = self.bin_contents.get_mut(bin).is_some_and(|c| c.contains(object));
                let retrieved = present && *object == target;
                if retrieved {
                    self.bin_contents.get_mut(bin).unwrap().remove(object);
                    self.retrieved.insert(object.clone());
                }
                self.attempts.push(SearchAttempt {
                    target,
                    bin: *bin,
                    retrieved,
                    looks: self.look_counter[self.current],
                });
                self.current += 1;
                if self.current >= self.instruction_queue.len() {
                    return true;
                }
                self.look_counter.push(0);
                self.inspected_at_start.push(self.inspected.keys().copied().collect());
                false
            }
            _ => false,
        }
    }

    /// Minimal looks per instruction given what had been inspected when it was issued.
    pub fn optimal_looks(&self) -> Vec<u32> {
        self.instruction_queue
            .iter()
            .zip(&self.inspected_at_start)
            .map(|(t, seen)| min_looks(seen, self.initial_location[t]))
            .collect()
    }

    pub(super) fn score(&self) -> TaskScore {
        let optimal_looks = self.optimal_looks();
        let mut retrieved = 0;
        let mut optimal = 0;
        for (i, a) in self.attempts.iter().enumerate() {
            if a.retrieved {
                retrieved += 1;
                if a.looks <= optimal_looks[i] {
                    optimal += 1;
                }
            }
        }
        TaskScore::Search { retrieved, optimal }
    }

    /// Whether some later target sits in a bin the exploration prior would
    /// already have opened while serving earlier instructions.
    pub fn is_adversarial(&self) -> bool {
        let mut seen = BTreeSet::new();
        for (k, t) in self.instruction_queue.iter().enumerate() {
            let bin = self.initial_location[t];
            if k > 0 && seen.contains(&bin) {
                return true;
            }
            for b in Bin::ALL.iter().take_while(|b| **b != bin) {
                seen.insert(*b);
            }
            seen.insert(bin);
        }
        false
    }
}

pub fn search_instruction(target: &str) -> String {
    format!("retrieve the {target} and put it in the white bin")
}

pub fn parse_search_instruction(instruction: &str) -> Option<&str> {
    instruction.strip_prefix("retrieve the ")?.strip_suffix(" and put it in the white bin")
}
