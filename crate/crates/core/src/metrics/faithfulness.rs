use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Vocabulary};
use crate::error::{Error, Result};
use crate::explain::Classifier;

/// Number of top-scored tokens that form the extracted rationale.
pub const TOP_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    pub comprehensiveness: f64,
    pub sufficiency: f64,
    pub instances: usize,
}

/// Word indices of the `k` highest scores (ties to the earlier word),
/// returned in ascending order. All words when there are fewer than `k`.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// `CLS`, the words whose membership in `chosen` equals `keep`, `SEP`.
pub fn select_words(example: &Example, chosen: &[usize], keep: bool) -> Vec<u32> {
    let words = &example.real_ids()[example.word_positions()];
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(Vocabulary::CLS_ID);
    ids.extend(
        words
            .iter()
            .enumerate()
            .filter(|(i, _)| chosen.contains(i) == keep)
            .map(|(_, &w)| w),
    );
    ids.push(Vocabulary::SEP_ID);
    ids
}

/// Mean over items of `m(x)ⱼ − m(x∖r)ⱼ` and `m(x)ⱼ − m(r)ⱼ`, where `j` is
/// the class predicted on `x` and `r` the top-`k` words. Removed words are
/// deleted and the sequence closed up.
pub fn faithfulness<C: Classifier + ?Sized>(
    model: &C,
    items: &[(&Example, &[f64])],
    k: usize,
) -> Result<Option<Faithfulness>> {
    if k == 0 {
        return Err(Error::input("faithfulness needs k ≥ 1"));
    }
    if items.is_empty() {
        return Ok(None);
    }
    let (mut comp, mut suff) = (0.0, 0.0);
    for (e, scores) in items {
        if scores.len() != e.word_count() {
            return Err(Error::shape(format!("{} scores for {} words in {}", scores.len(), e.word_count(), e.id)));
        }
        let full = model.class_probs(e.real_ids())?;
        let j = crate::explain::argmax(&full);
        let chosen = top_k(scores, k);
        let without = model.class_probs(&select_words(e, &chosen, false))?;
        let only = model.class_probs(&select_words(e, &chosen, true))?;
        comp += full[j] - without[j];
        suff += full[j] - only[j];
    }
    let n = items.len() as f64;
    let out = Faithfulness {
        comprehensiveness: comp / n,
        sufficiency: suff / n,
        instances: items.len(),
    };
    if !(out.comprehensiveness.is_finite() && out.sufficiency.is_finite()) {
        return Err(Error::numeric("non-finite faithfulness"));
    }
    Ok(Some(out))
}
