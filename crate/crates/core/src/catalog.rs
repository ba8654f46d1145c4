//! Fixed catalogs: the 15 encoded entities and the 7 action classes.
//!
//! Entity index order (feature block `k` occupies dims `6k..6k+6`):
//!
//! | idx | name             | idx | name              |
//! |-----|------------------|-----|-------------------|
//! | 0   | head             | 8   | right-upper-leg   |
//! | 1   | torso            | 9   | right-lower-leg   |
//! | 2   | left-upper-arm   | 10  | bike              |
//! | 3   | left-lower-arm   | 11  | camera            |
//! | 4   | right-upper-arm  | 12  | computer          |
//! | 5   | right-lower-arm  | 13  | horse             |
//! | 6   | left-upper-leg   | 14  | instrument        |
//! | 7   | left-lower-leg   |     |                   |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Head,
    Torso,
    LeftUpperArm,
    LeftLowerArm,
    RightUpperArm,
    RightLowerArm,
    LeftUpperLeg,
    LeftLowerLeg,
    RightUpperLeg,
    RightLowerLeg,
    Bike,
    Camera,
    Computer,
    Horse,
    Instrument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    BodyPart,
    Object,
}

impl EntityKind {
    pub const COUNT: usize = 15;

    pub const ALL: [EntityKind; Self::COUNT] = [
        EntityKind::Head,
        EntityKind::Torso,
        EntityKind::LeftUpperArm,
        EntityKind::LeftLowerArm,
        EntityKind::RightUpperArm,
        EntityKind::RightLowerArm,
        EntityKind::LeftUpperLeg,
        EntityKind::LeftLowerLeg,
        EntityKind::RightUpperLeg,
        EntityKind::RightLowerLeg,
        EntityKind::Bike,
        EntityKind::Camera,
        EntityKind::Computer,
        EntityKind::Horse,
        EntityKind::Instrument,
    ];

    /// Parts reported by the upper-body pose estimator.
    pub const UPPER_BODY: [EntityKind; 6] = [
        EntityKind::Head,
        EntityKind::Torso,
        EntityKind::LeftUpperArm,
        EntityKind::LeftLowerArm,
        EntityKind::RightUpperArm,
        EntityKind::RightLowerArm,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Head => "head",
            EntityKind::Torso => "torso",
            EntityKind::LeftUpperArm => "left-upper-arm",
            EntityKind::LeftLowerArm => "left-lower-arm",
            EntityKind::RightUpperArm => "right-upper-arm",
            EntityKind::RightLowerArm => "right-lower-arm",
            EntityKind::LeftUpperLeg => "left-upper-leg",
            EntityKind::LeftLowerLeg => "left-lower-leg",
            EntityKind::RightUpperLeg => "right-upper-leg",
            EntityKind::RightLowerLeg => "right-lower-leg",
            EntityKind::Bike => "bike",
            EntityKind::Camera => "camera",
            EntityKind::Computer => "computer",
            EntityKind::Horse => "horse",
            EntityKind::Instrument => "instrument",
        }
    }

    pub fn category(self) -> Category {
        if self.index() < 10 {
            Category::BodyPart
        } else {
            Category::Object
        }
    }

    /// Leg segments; absent whenever the pose came from the upper-body model.
    pub fn is_leg(self) -> bool {
        matches!(
            self,
            EntityKind::LeftUpperLeg | EntityKind::LeftLowerLeg | EntityKind::RightUpperLeg | EntityKind::RightLowerLeg
        )
    }

    /// Left/right counterpart under a horizontal flip; identity for unsided kinds.
    pub fn mirror(self) -> Self {
        use EntityKind::*;
        match self {
            LeftUpperArm => RightUpperArm,
            RightUpperArm => LeftUpperArm,
            LeftLowerArm => RightLowerArm,
            RightLowerArm => LeftLowerArm,
            LeftUpperLeg => RightUpperLeg,
            RightUpperLeg => LeftUpperLeg,
            LeftLowerLeg => RightLowerLeg,
            RightLowerLeg => LeftLowerLeg,
            other => other,
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownName(pub String);

impl FromStr for EntityKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|k| k.name() == s).ok_or_else(|| UnknownName(s.to_owned()))
    }
}

/// The seven action labels, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionClass {
    InteractingWithComputer,
    Photographing,
    PlayingInstrument,
    RidingBike,
    RidingHorse,
    Running,
    Walking,
}

impl ActionClass {
    pub const COUNT: usize = 7;

    pub const ALL: [ActionClass; Self::COUNT] = [
        ActionClass::InteractingWithComputer,
        ActionClass::Photographing,
        ActionClass::PlayingInstrument,
        ActionClass::RidingBike,
        ActionClass::RidingHorse,
        ActionClass::Running,
        ActionClass::Walking,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::InteractingWithComputer => "interacting-with-computer",
            ActionClass::Photographing => "photographing",
            ActionClass::PlayingInstrument => "playing-instrument",
            ActionClass::RidingBike => "riding-bike",
            ActionClass::RidingHorse => "riding-horse",
            ActionClass::Running => "running",
            ActionClass::Walking => "walking",
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionClass {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|c| c.name() == s).ok_or_else(|| UnknownName(s.to_owned()))
    }
}
