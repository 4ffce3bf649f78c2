use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Post category. The numeric ids are fixed across reports and checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Class {
    Normal = 0,
    Offensive = 1,
    Hatespeech = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Normal, Class::Offensive, Class::Hatespeech];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Class> {
        Class::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::input(format!("class id {i} out of range")))
    }

    /// Parses an annotation label (`hatespeech`, `offensive`, `normal`).
    pub fn from_label(label: &str) -> Result<Class> {
        match label.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Class::Normal),
            "offensive" => Ok(Class::Offensive),
            "hatespeech" | "hate speech" | "hate_speech" => Ok(Class::Hatespeech),
            other => Err(Error::input(format!("unknown label {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Normal => "normal",
            Class::Offensive => "offensive",
            Class::Hatespeech => "hatespeech",
        }
    }

    /// Offensive and hate speech both count as toxic.
    pub fn is_toxic(self) -> bool {
        self != Class::Normal
    }
}

impl From<Class> for u8 {
    fn from(c: Class) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for Class {
    type Error = Error;

    fn try_from(v: u8) -> Result<Class> {
        Class::from_index(usize::from(v))
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
