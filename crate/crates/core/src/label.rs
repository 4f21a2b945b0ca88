use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of leaning categories. Fixed for every model and report.
pub const NUM_CLASSES: usize = 6;

/// The six ordered political-leaning categories.
///
/// The ordinal index is used as loss target, confusion-matrix axis and
/// report row everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LeaningLabel {
    FarLeft = 0,
    Left = 1,
    Center = 2,
    AntiWoke = 3,
    Right = 4,
    FarRight = 5,
}

impl LeaningLabel {
    pub const ALL: [LeaningLabel; NUM_CLASSES] = [
        LeaningLabel::FarLeft,
        LeaningLabel::Left,
        LeaningLabel::Center,
        LeaningLabel::AntiWoke,
        LeaningLabel::Right,
        LeaningLabel::FarRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LeaningLabel::FarLeft => "FAR_LEFT",
            LeaningLabel::Left => "LEFT",
            LeaningLabel::Center => "CENTER",
            LeaningLabel::AntiWoke => "ANTI_WOKE",
            LeaningLabel::Right => "RIGHT",
            LeaningLabel::FarRight => "FAR_RIGHT",
        }
    }

    /// Index of the largest entry; ties resolve to the lower class index.
    pub fn argmax(distribution: &[f64]) -> LeaningLabel {
        let mut best = 0;
        for (i, &p) in distribution.iter().enumerate().take(NUM_CLASSES) {
            if p > distribution[best] {
                best = i;
            }
        }
        Self::ALL[best]
    }
}

impl fmt::Display for LeaningLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseLabelError(pub String);

impl fmt::Display for ParseLabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown leaning label {:?}", self.0)
    }
}

impl std::error::Error for ParseLabelError {}

impl FromStr for LeaningLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LeaningLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| ParseLabelError(s.to_string()))
    }
}
