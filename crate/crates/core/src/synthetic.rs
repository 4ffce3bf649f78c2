//! Generated corpora with planted labels and rationales, in the same raw
//! annotation layout as real data so they exercise the full ingest path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotator, Class, RawPost, SplitPartition, TARGET_GROUPS};
use crate::numcore::Rng;

pub fn neutral_word(i: usize) -> String {
    format!("w{i:03}")
}

pub fn lexicon_word(i: usize) -> String {
    format!("tox{i}")
}

pub fn trigger_word(i: usize) -> String {
    format!("trig{i}")
}

pub fn context_word(i: usize) -> String {
    format!("ctx{i}")
}

pub fn insult_word(i: usize) -> String {
    format!("ins{i}")
}

/// Posts whose class is hatespeech iff a lexicon word occurs; the
/// rationale marks the lexicon positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconCorpus {
    pub posts: usize,
    pub neutral_words: usize,
    pub lexicon_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub toxic_fraction: f64,
    /// When set, each toxic post draws a rate `u ~ U(0, 1)` and its
    /// annotators also mark every other word independently with probability
    /// `u`. Observed rationale bits then carry information about hidden ones.
    pub diffuse_rationales: bool,
    pub seed: u64,
}

impl Default for LexiconCorpus {
    fn default() -> Self {
        LexiconCorpus {
            posts: 2000,
            neutral_words: 190,
            lexicon_words: 10,
            min_words: 6,
            max_words: 14,
            toxic_fraction: 0.5,
            diffuse_rationales: false,
            seed: 0,
        }
    }
}

impl LexiconCorpus {
    pub fn generate(&self) -> Vec<RawPost> {
        let mut rng = Rng::derive(self.seed, &[Rng::key("lexicon-corpus")]);
        (0..self.posts)
            .map(|i| {
                let len = self.min_words + rng.below(self.max_words - self.min_words + 1);
                let mut tokens: Vec<String> = (0..len).map(|_| neutral_word(rng.below(self.neutral_words))).collect();
                let mut rationale = vec![0u8; len];
                let toxic = rng.bernoulli(self.toxic_fraction);
                if toxic {
                    let k = 1 + rng.below(2.min(len));
                    for pos in rng.sample_without_replacement(len, k) {
                        tokens[pos] = lexicon_word(rng.below(self.lexicon_words));
                        rationale[pos] = 1;
                    }
                    if self.diffuse_rationales {
                        let u = rng.uniform();
                        for b in rationale.iter_mut() {
                            if *b == 0 && rng.bernoulli(u) {
                                *b = 1;
                            }
                        }
                    }
                }
                let class = if toxic { Class::Hatespeech } else { Class::Normal };
                post(i, tokens, class, rationale, &mut rng)
            })
            .collect()
    }
}

/// Posts where a trigger word is hateful only next to a context word
/// somewhere in the same post; rationales mark both. Insult words alone make
/// a post offensive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextCorpus {
    pub posts: usize,
    pub neutral_words: usize,
    pub trigger_words: usize,
    pub context_words: usize,
    pub insult_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for ContextCorpus {
    fn default() -> Self {
        ContextCorpus {
            posts: 1000,
            neutral_words: 120,
            trigger_words: 5,
            context_words: 5,
            insult_words: 5,
            min_words: 6,
            max_words: 12,
            seed: 0,
        }
    }
}

impl ContextCorpus {
    pub fn generate(&self) -> Vec<RawPost> {
        let mut rng = Rng::derive(self.seed, &[Rng::key("context-corpus")]);
        (0..self.posts)
            .map(|i| {
                let len = self.min_words + rng.below(self.max_words - self.min_words + 1);
                let mut tokens: Vec<String> = (0..len).map(|_| neutral_word(rng.below(self.neutral_words))).collect();
                let mut rationale = vec![0u8; len];
                // Equal shares of: nothing, trigger only, context only,
                // trigger with context, insult.
                let kind = rng.below(5);
                let slots = rng.sample_without_replacement(len, 2);
                let class = match kind {
                    1 => {
                        tokens[slots[0]] = trigger_word(rng.below(self.trigger_words));
                        Class::Normal
                    }
                    2 => {
                        tokens[slots[0]] = context_word(rng.below(self.context_words));
                        Class::Normal
                    }
                    3 => {
                        tokens[slots[0]] = trigger_word(rng.below(self.trigger_words));
                        tokens[slots[1]] = context_word(rng.below(self.context_words));
                        rationale[slots[0]] = 1;
                        rationale[slots[1]] = 1;
                        Class::Hatespeech
                    }
                    4 => {
                        tokens[slots[0]] = insult_word(rng.below(self.insult_words));
                        rationale[slots[0]] = 1;
                        Class::Offensive
                    }
                    _ => Class::Normal,
                };
                post(i, tokens, class, rationale, &mut rng)
            })
            .collect()
    }
}

fn post(i: usize, tokens: Vec<String>, class: Class, rationale: Vec<u8>, rng: &mut Rng) -> RawPost {
    let group = TARGET_GROUPS[rng.below(TARGET_GROUPS.len())].to_string();
    let annotators = (0..3)
        .map(|_| Annotator {
            label: class.name().to_string(),
            targets: vec![group.clone()],
        })
        .collect();
    let rationales = if class == Class::Normal { Vec::new() } else { vec![rationale; 3] };
    RawPost {
        post_id: format!("syn{i:05}"),
        post_tokens: tokens,
        annotators,
        rationales,
    }
}

/// Random 8:1:1 partition of the posts' ids.
pub fn partition(posts: &[RawPost], seed: u64) -> SplitPartition {
    let ids: Vec<String> = posts.iter().map(|p| p.post_id.clone()).collect();
    SplitPartition::random(&ids, seed)
}

/// Dataset-file JSON (post id → annotations).
pub fn to_dataset_json(posts: &[RawPost]) -> serde_json::Value {
    let map: BTreeMap<&str, &RawPost> = posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
    serde_json::to_value(map).expect("posts serialise")
}
