use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Event classes. `EN` (environmental noise) is the non-event class: quiet
/// recordings and Stage-I false alarms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    TH,
    WD,
    JH,
    SH,
    EN,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::TH,
        ClassLabel::WD,
        ClassLabel::JH,
        ClassLabel::SH,
        ClassLabel::EN,
    ];

    pub const EVENTS: [ClassLabel; 4] = [ClassLabel::TH, ClassLabel::WD, ClassLabel::JH, ClassLabel::SH];

    pub fn code(self) -> &'static str {
        match self {
            ClassLabel::TH => "TH",
            ClassLabel::WD => "WD",
            ClassLabel::JH => "JH",
            ClassLabel::SH => "SH",
            ClassLabel::EN => "EN",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::TH => "thunderstorm",
            ClassLabel::WD => "welding",
            ClassLabel::JH => "jackhammer",
            ClassLabel::SH => "shoveling",
            ClassLabel::EN => "environmental noise",
        }
    }

    pub fn is_event(self) -> bool {
        self != ClassLabel::EN
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|l| l.code().eq_ignore_ascii_case(s))
            .map_or_else(|| param(format!("unknown class label {s:?}")), Ok)
    }
}
