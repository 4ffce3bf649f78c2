use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Class, RawPost, Vocabulary};
use crate::error::{Error, Result};

/// A post after aggregation and encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    /// Words kept after truncation, aligned to positions `1..attention_len-1`.
    pub tokens: Vec<String>,
    /// CLS, word ids, SEP, then PAD up to the fixed length.
    pub token_ids: Vec<u32>,
    /// Real positions including CLS and SEP.
    pub attention_len: usize,
    pub class: Class,
    /// Aligned to `token_ids`; zero at CLS, SEP and PAD.
    pub gold_rationale: Vec<u8>,
    pub target_groups: BTreeSet<String>,
}

impl Example {
    /// Number of real word positions (excluding CLS/SEP).
    pub fn word_count(&self) -> usize {
        self.attention_len - 2
    }

    /// Positions of real words: `1..attention_len-1`.
    pub fn word_positions(&self) -> std::ops::Range<usize> {
        1..self.attention_len - 1
    }

    /// Gold rationale restricted to word positions.
    pub fn word_rationale(&self) -> &[u8] {
        &self.gold_rationale[self.word_positions()]
    }

    pub fn real_ids(&self) -> &[u32] {
        &self.token_ids[..self.attention_len]
    }
}

/// Builds the id sequence `CLS w… SEP PAD…` of length `max_len`.
pub fn pack_ids(word_ids: &[u32], max_len: usize) -> (Vec<u32>, usize) {
    let keep = word_ids.len().min(max_len.saturating_sub(2));
    let mut ids = Vec::with_capacity(max_len);
    ids.push(Vocabulary::CLS_ID);
    ids.extend_from_slice(&word_ids[..keep]);
    ids.push(Vocabulary::SEP_ID);
    let real = ids.len();
    ids.resize(max_len.max(real), Vocabulary::PAD_ID);
    (ids, real)
}

/// Aggregates and encodes one post. Errors if the post has no majority label.
pub fn encode(post: &RawPost, vocab: &Vocabulary, max_len: usize) -> Result<Example> {
    if max_len < 3 {
        return Err(Error::input(format!("max_len {max_len} leaves no room for words")));
    }
    let (class, rationale) = post
        .aggregate()?
        .ok_or_else(|| Error::input(format!("post {} has no majority label", post.post_id)))?;
    let word_ids: Vec<u32> = post.post_tokens.iter().map(|w| vocab.id(w)).collect();
    let (token_ids, attention_len) = pack_ids(&word_ids, max_len);
    let kept = attention_len - 2;
    let mut gold_rationale = vec![0u8; max_len];
    gold_rationale[1..=kept].copy_from_slice(&rationale[..kept]);
    Ok(Example {
        id: post.post_id.clone(),
        tokens: post.post_tokens[..kept].to_vec(),
        token_ids,
        attention_len,
        class,
        gold_rationale,
        target_groups: post.target_groups().into_iter().collect(),
    })
}
