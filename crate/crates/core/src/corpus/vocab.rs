use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
/// Replacement token of the masked-language-model stage.
pub const MASK: &str = "[MASK]";

/// Word-level vocabulary. Specials occupy ids 0..=4 in the order
/// CLS, SEP, PAD, UNK, MASK; words follow by descending train frequency,
/// ties broken lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    min_freq: usize,
}

impl Vocabulary {
    pub const CLS_ID: u32 = 0;
    pub const SEP_ID: u32 = 1;
    pub const PAD_ID: u32 = 2;
    pub const UNK_ID: u32 = 3;
    pub const MASK_ID: u32 = 4;
    pub const SPECIALS: [&'static str; 5] = [CLS, SEP, PAD, UNK, MASK];

    /// Builds from training sentences; words seen fewer than `min_freq`
    /// times map to UNK.
    pub fn build<'a, I, S>(sentences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for w in s.as_ref() {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut words: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_freq.max(1) && !Self::SPECIALS.contains(&w))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = Self::SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|(w, _)| w.to_string()))
            .collect();
        Self::from_tokens(tokens, min_freq).expect("specials are first by construction")
    }

    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.len() < Self::SPECIALS.len() || tokens[..Self::SPECIALS.len()] != Self::SPECIALS {
            return Err(Error::input("vocabulary must start with CLS, SEP, PAD, UNK, MASK"));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::input(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token: tokens,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    /// Id of `word`, or UNK.
    pub fn id(&self, word: &str) -> u32 {
        self.token_to_id.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.token_to_id.contains_key(word)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < Self::SPECIALS.len()
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_freq: usize,
    tokens: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabFile {
            min_freq: self.min_freq,
            tokens: self.id_to_token.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = VocabFile::deserialize(d)?;
        Vocabulary::from_tokens(f.tokens, f.min_freq).map_err(serde::de::Error::custom)
    }
}
