//! Closed subtask vocabulary for the three tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SEARCH_OBJECTS: [&str; 15] = [
    "green tape",
    "red block",
    "corn",
    "baguette",
    "blue block",
    "fried chicken",
    "milk carton",
    "ketchup",
    "eraser",
    "grapes",
    "strawberry",
    "tomato",
    "pear",
    "wooden block",
    "olive oil",
];

pub const SHELF_OBJECTS: [&str; 9] = [
    "panda plushie",
    "purple plushie",
    "zebra plushie",
    "elephant plushie",
    "lion plushie",
    "smily face ball",
    "hello kitty plushie",
    "baby shoe",
    "milk carton",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("label does not parse against any task grammar: {0:?}")]
pub struct GrammarError(pub String);

macro_rules! word_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $word:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($var),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn word(self) -> &'static str {
                match self { $($name::$var => $word),+ }
            }

            pub fn from_word(w: &str) -> Option<Self> {
                match w { $($word => Some($name::$var),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.word())
            }
        }
    };
}

word_enum!(
    /// Bins in exploration-prior order.
    Bin { Left => "left", Center => "center", Right => "right" }
);
word_enum!(Ingredient { Peanuts => "peanuts", JellyBeans => "jelly beans" });
word_enum!(Bowl { Green => "green", Blue => "blue" });
word_enum!(Shelf { Bottom => "bottom", Top => "top" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Search,
    Counting,
    Dust,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Search, TaskKind::Counting, TaskKind::Dust];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Search => "search",
            TaskKind::Counting => "counting",
            TaskKind::Dust => "dust",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "search" => Ok(TaskKind::Search),
            "counting" => Ok(TaskKind::Counting),
            "dust" => Ok(TaskKind::Dust),
            other => Err(format!("unknown task {other:?} (expected search, counting or dust)")),
        }
    }
}

/// Primitive verbs the low-level executor emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    MoveTo,
    Look,
    Grasp,
    Pour,
    Dust,
    Place,
    Park,
}

/// A subtask label from one of the task grammars.
///
/// Serialized as its natural-language label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubtaskCommand {
    LookInside(Bin),
    Take { object: String, bin: Bin },
    PickUpScooper,
    PlaceScoop { ingredient: Ingredient, bowl: Bowl },
    ResetScooper,
    DropScooper,
    RemoveObject(Shelf),
    PickUpDuster,
    DustShelf(Shelf),
    ResetDuster,
    PutDownDuster,
    PlaceObject { object: String, shelf: Shelf },
}

impl SubtaskCommand {
    pub fn task(&self) -> TaskKind {
        use SubtaskCommand::*;
        match self {
            LookInside(_) | Take { .. } => TaskKind::Search,
            PickUpScooper | PlaceScoop { .. } | ResetScooper | DropScooper => TaskKind::Counting,
            _ => TaskKind::Dust,
        }
    }

    /// The verb that advances this subtask, besides `MoveTo`.
    pub fn verb(&self) -> Verb {
        use SubtaskCommand::*;
        match self {
            LookInside(_) => Verb::Look,
            Take { .. } | PickUpScooper | RemoveObject(_) | PickUpDuster => Verb::Grasp,
            PlaceScoop { .. } => Verb::Pour,
            DustShelf(_) => Verb::Dust,
            ResetScooper | ResetDuster | PutDownDuster => Verb::Park,
            DropScooper | PlaceObject { .. } => Verb::Place,
        }
    }

    /// Rule name shared by every label with the same template, slots elided.
    pub fn template(&self) -> &'static str {
        use SubtaskCommand::*;
        match self {
            LookInside(_) => "look inside the <LOCATION> bin",
            Take { .. } => "take the <OBJECT> from the <LOCATION> bin and place it in the white bin",
            PickUpScooper => "pick up the scooper",
            PlaceScoop { .. } => "place a scoop of <OBJECT> in the <COLOR> bowl",
            ResetScooper => "reset scooper position",
            DropScooper => "drop the scooper",
            RemoveObject(Shelf::Bottom) => "remove the object on the bottom shelf",
            RemoveObject(Shelf::Top) => "remove the object on the top shelf",
            PickUpDuster => "pick up duster",
            DustShelf(Shelf::Bottom) => "dust bottom shelf",
            DustShelf(Shelf::Top) => "dust top shelf",
            ResetDuster => "reset duster",
            PutDownDuster => "put down duster",
            PlaceObject { shelf: Shelf::Bottom, .. } => "place the <OBJECT> on the bottom shelf",
            PlaceObject { shelf: Shelf::Top, .. } => "place the <OBJECT> on the top shelf",
        }
    }

    /// Every label of a task, with slots filled from the vocabularies.
    pub fn enumerate(task: TaskKind) -> Vec<SubtaskCommand> {
        use SubtaskCommand::*;
        let mut out = Vec::new();
        match task {
            TaskKind::Search => {
                out.extend(Bin::ALL.iter().map(|b| LookInside(*b)));
                for o in SEARCH_OBJECTS {
                    out.extend(Bin::ALL.iter().map(|b| Take { object: o.to_string(), bin: *b }));
                }
            }
            TaskKind::Counting => {
                out.push(PickUpScooper);
                for i in Ingredient::ALL {
                    out.extend(Bowl::ALL.iter().map(|b| PlaceScoop { ingredient: *i, bowl: *b }));
                }
                out.extend([ResetScooper, DropScooper]);
            }
            TaskKind::Dust => {
                out.extend(Shelf::ALL.iter().map(|s| RemoveObject(*s)));
                out.push(PickUpDuster);
                out.extend(Shelf::ALL.iter().map(|s| DustShelf(*s)));
                out.extend([ResetDuster, PutDownDuster]);
                for o in SHELF_OBJECTS {
                    out.extend(Shelf::ALL.iter().map(|s| PlaceObject { object: o.to_string(), shelf: *s }));
                }
            }
        }
        out
    }
}

impl fmt::Display for SubtaskCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SubtaskCommand::*;
        match self {
            LookInside(b) => write!(f, "look inside the {b} bin"),
            Take { object, bin } => write!(f, "take the {object} from the {bin} bin and place it in the white bin"),
            PickUpScooper => f.write_str("pick up the scooper"),
            PlaceScoop { ingredient, bowl } => write!(f, "place a scoop of {ingredient} in the {bowl} bowl"),
            ResetScooper => f.write_str("reset scooper position"),
            DropScooper => f.write_str("drop the scooper"),
            RemoveObject(s) => write!(f, "remove the object on the {s} shelf"),
            PickUpDuster => f.write_str("pick up duster"),
            DustShelf(s) => write!(f, "dust {s} shelf"),
            ResetDuster => f.write_str("reset duster"),
            PutDownDuster => f.write_str("put down duster"),
            PlaceObject { object, shelf } => write!(f, "place the {object} on the {shelf} shelf"),
        }
    }
}

impl FromStr for SubtaskCommand {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use SubtaskCommand::*;
        let err = || GrammarError(s.to_string());
        let fixed = [
            ("pick up the scooper", PickUpScooper),
            ("reset scooper position", ResetScooper),
            ("drop the scooper", DropScooper),
            ("pick up duster", PickUpDuster),
            ("reset duster", ResetDuster),
            ("put down duster", PutDownDuster),
        ];
        if let Some((_, cmd)) = fixed.into_iter().find(|(l, _)| *l == s) {
            return Ok(cmd);
        }
        if let Some(rest) = s.strip_prefix("look inside the ").and_then(|r| r.strip_suffix(" bin")) {
            return Bin::from_word(rest).map(LookInside).ok_or_else(err);
        }
        if let Some(rest) =
            s.strip_prefix("take the ").and_then(|r| r.strip_suffix(" bin and place it in the white bin"))
        {
            let (object, bin) = rest.rsplit_once(" from the ").ok_or_else(err)?;
            if !SEARCH_OBJECTS.contains(&object) {
                return Err(err());
            }
            let bin = Bin::from_word(bin).ok_or_else(err)?;
            return Ok(Take { object: object.to_string(), bin });
        }
        if let Some(rest) = s.strip_prefix("place a scoop of ").and_then(|r| r.strip_suffix(" bowl")) {
            let (ing, bowl) = rest.rsplit_once(" in the ").ok_or_else(err)?;
            let ingredient = Ingredient::from_word(ing).ok_or_else(err)?;
            let bowl = Bowl::from_word(bowl).ok_or_else(err)?;
            return Ok(PlaceScoop { ingredient, bowl });
        }
        if let Some(rest) = s.strip_prefix("remove the object on the ").and_then(|r| r.strip_suffix(" shelf")) {
            return Shelf::from_word(rest).map(RemoveObject).ok_or_else(err);
        }
        if let Some(rest) = s.strip_prefix("dust ").and_then(|r| r.strip_suffix(" shelf")) {
            return Shelf::from_word(rest).map(DustShelf).ok_or_else(err);
        }
        if let Some(rest) = s.strip_prefix("place the ").and_then(|r| r.strip_suffix(" shelf")) {
            let (object, shelf) = rest.rsplit_once(" on the ").ok_or_else(err)?;
            if !SHELF_OBJECTS.contains(&object) {
                return Err(err());
            }
            let shelf = Shelf::from_word(shelf).ok_or_else(err)?;
            return Ok(PlaceObject { object: object.to_string(), shelf });
        }
        Err(err())
    }
}

impl Serialize for SubtaskCommand {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubtaskCommand {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn number_word(n: u32) -> String {
    match n {
        1 => "one".into(),
        2 => "two".into(),
        3 => "three".into(),
        4 => "four".into(),
        5 => "five".into(),
        n => n.to_string(),
    }
}

pub fn parse_number_word(w: &str) -> Option<u32> {
    match w {
        "one" => Some(1),
        "two" => Some(2),
        "three" => Some(3),
        "four" => Some(4),
        "five" => Some(5),
        other => other.parse().ok(),
    }
}
