use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Vigilance state of one epoch. Index order is fixed: P = 0, S = 1, W = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// Paradoxical (REM) sleep.
    #[serde(rename = "P")]
    Paradoxical,
    /// Slow-wave (NREM) sleep.
    #[serde(rename = "S")]
    SlowWave,
    /// Wake.
    #[serde(rename = "W")]
    Wake,
}

impl Stage {
    pub const COUNT: usize = 3;
    pub const ALL: [Stage; 3] = [Stage::Paradoxical, Stage::SlowWave, Stage::Wake];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Stage> {
        Stage::ALL.get(index).copied()
    }

    pub fn code(self) -> char {
        match self {
            Stage::Paradoxical => 'P',
            Stage::SlowWave => 'S',
            Stage::Wake => 'W',
        }
    }

    /// Index of the largest probability; ties go to the lowest class index.
    pub fn argmax(probabilities: &[f64; 3]) -> Stage {
        let mut best = 0;
        for i in 1..3 {
            if probabilities[i] > probabilities[best] {
                best = i;
            }
        }
        Stage::ALL[best]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P" => Ok(Stage::Paradoxical),
            "S" => Ok(Stage::SlowWave),
            "W" => Ok(Stage::Wake),
            other => Err(Error::invalid(format!(
                "unknown label {other:?}, expected P, S or W"
            ))),
        }
    }
}
