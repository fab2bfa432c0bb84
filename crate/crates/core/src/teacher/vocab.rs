//! Word list with category tags.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub const DESK_VOCAB: &str = include_str!("../../data/desk.vocab");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordCategory {
    Object,
    Spatial,
    Grammatical,
}

impl FromStr for WordCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(Self::Object),
            "spatial" => Ok(Self::Spatial),
            "grammatical" => Ok(Self::Grammatical),
            other => Err(Error::Config(format!("unknown word category `{other}`"))),
        }
    }
}

impl fmt::Display for WordCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Object => "object",
            Self::Spatial => "spatial",
            Self::Grammatical => "grammatical",
        })
    }
}

/// Token ids index `words`; object classes index the object words in file
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    categories: Vec<WordCategory>,
    index: HashMap<String, usize>,
    objects: Vec<usize>,
}

impl Vocabulary {
    /// One `word category` pair per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Vocabulary {
            words: Vec::new(),
            categories: Vec::new(),
            index: HashMap::new(),
            objects: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(word), Some(cat), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!("vocabulary line {}: expected `word category`", n + 1)));
            };
            let cat: WordCategory = cat.parse()?;
            if v.index.insert(word.to_string(), v.words.len()).is_some() {
                return Err(Error::Config(format!("vocabulary word `{word}` listed twice")));
            }
            if cat == WordCategory::Object {
                v.objects.push(v.words.len());
            }
            v.words.push(word.to_string());
            v.categories.push(cat);
        }
        if v.objects.is_empty() {
            return Err(Error::Config("vocabulary has no object words".into()));
        }
        Ok(v)
    }

    pub fn desk() -> Self {
        Self::parse(DESK_VOCAB).expect("bundled vocabulary parses")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn category(&self, id: usize) -> WordCategory {
        self.categories[id]
    }

    pub fn words_in(&self, cat: WordCategory) -> Vec<&str> {
        self.words
            .iter()
            .zip(&self.categories)
            .filter(|(_, c)| **c == cat)
            .map(|(w, _)| w.as_str())
            .collect()
    }

    pub fn n_classes(&self) -> usize {
        self.objects.len()
    }

    pub fn class_word(&self, class: usize) -> Result<&str> {
        self.objects
            .get(class)
            .map(|&id| self.words[id].as_str())
            .ok_or(Error::UnknownClass(class))
    }

    pub fn class_of(&self, word: &str) -> Option<usize> {
        let id = *self.index.get(word)?;
        self.objects.iter().position(|&o| o == id)
    }

    /// Object words in class order (for ASCII maps and reports).
    pub fn class_names(&self) -> Vec<String> {
        self.objects.iter().map(|&i| self.words[i].clone()).collect()
    }

    pub fn encode(&self, sentence: &[String]) -> Result<Vec<usize>> {
        sentence.iter().map(|w| self.id(w)).collect()
    }
}
