use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One multiple-choice benchmark item.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MCItem {
    pub question: String,
    pub choices: Vec<String>,
    #[cfg_attr(feature = "serde", serde(rename = "gold"))]
    pub gold_index: usize,
}

impl MCItem {
    pub fn validate(&self) -> Result<()> {
        if self.choices.len() < 2 {
            return Err(Error::Validation(format!("{} choices, need at least 2", self.choices.len())));
        }
        if self.gold_index >= self.choices.len() {
            return Err(Error::Validation(format!(
                "gold index {} out of range for {} choices",
                self.gold_index,
                self.choices.len()
            )));
        }
        for (i, a) in self.choices.iter().enumerate() {
            if self.choices[..i].contains(a) {
                return Err(Error::Validation(format!("choice {i} duplicates an earlier choice")));
            }
        }
        Ok(())
    }

    pub fn gold(&self) -> &str {
        &self.choices[self.gold_index]
    }
}

/// One question/answer pair.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct QAPair {
    pub question: String,
    pub answer: String,
}

impl QAPair {
    pub fn validate(&self) -> Result<()> {
        if self.question.is_empty() || self.answer.is_empty() {
            return Err(Error::Validation("question and answer must be non-empty".into()));
        }
        Ok(())
    }
}
