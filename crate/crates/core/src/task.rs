use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The three binary classification problems of the annotation backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Singing voice present (1) or absent (0), on the vocal channel.
    Vocal,
    /// Picked (1) versus strummed (0) guitar, on the guitar channel.
    Guitar,
    /// Hand-clapping present (1) or absent (0), on the mono mix.
    Palmas,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Vocal, Task::Guitar, Task::Palmas];

    pub fn tag(self) -> u8 {
        match self {
            Task::Vocal => 0,
            Task::Guitar => 1,
            Task::Palmas => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Task::Vocal),
            1 => Some(Task::Guitar),
            2 => Some(Task::Palmas),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Vocal => "vocal",
            Task::Guitar => "guitar",
            Task::Palmas => "palmas",
        }
    }

    /// Palmas images are built from log-compressed mel energies.
    pub fn log_mel(self) -> bool {
        matches!(self, Task::Palmas)
    }

    /// Median filter length in decisions: ~1 s for vocal and guitar, ~5 s for palmas.
    pub fn smoothing_window(self) -> usize {
        match self {
            Task::Vocal | Task::Guitar => 5,
            Task::Palmas => 21,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vocal" => Ok(Task::Vocal),
            "guitar" => Ok(Task::Guitar),
            "palmas" => Ok(Task::Palmas),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}
