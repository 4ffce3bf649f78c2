use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::encoder::RationaleInput;
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Positions whose rationale is hidden from the model and scored by the loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    /// Sorted, within the example's word positions.
    pub indices: Vec<usize>,
    pub ratio: f64,
}

/// `round_half_up(ratio × eligible)`, at least 1 and at most `eligible`.
pub fn mask_count(ratio: f64, eligible: usize) -> usize {
    let n = (ratio * eligible as f64 + 0.5).floor() as usize;
    n.clamp(1, eligible.max(1))
}

/// Stream for the mask of one example in one epoch.
pub fn mask_rng(seed: u64, example_id: &str, epoch: u64) -> Rng {
    Rng::derive(seed, &[Rng::key("rationale-mask"), Rng::key(example_id), epoch])
}

/// Uniform sample without replacement over the example's word positions.
pub fn sample_mask(example: &Example, ratio: f64, rng: &mut Rng) -> Result<MaskPlan> {
    let eligible = example.word_count();
    if eligible == 0 {
        return Err(Error::input(format!("example {} has no maskable positions", example.id)));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::input(format!("mask ratio {ratio} not in (0, 1]")));
    }
    let k = mask_count(ratio, eligible);
    let mut indices: Vec<usize> = rng
        .sample_without_replacement(eligible, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    indices.sort_unstable();
    Ok(MaskPlan { indices, ratio })
}

impl MaskPlan {
    /// Rationale inputs for the example's real positions: masked where
    /// planned, the gold bit elsewhere.
    pub fn rationale_inputs(&self, example: &Example) -> Vec<RationaleInput> {
        let n = example.attention_len;
        let mut out: Vec<RationaleInput> = example.gold_rationale[..n]
            .iter()
            .map(|&b| RationaleInput::Observed(b != 0))
            .collect();
        for &i in &self.indices {
            out[i] = RationaleInput::Masked;
        }
        out
    }

    /// Loss mask over the example's real positions.
    pub fn loss_mask(&self, example: &Example) -> Vec<bool> {
        let mut m = vec![false; example.attention_len];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Class;

    fn example(words: usize) -> Example {
        let n = words + 2;
        Example {
            id: "e".into(),
            tokens: vec!["w".into(); words],
            token_ids: vec![5; n],
            attention_len: n,
            class: Class::Hatespeech,
            gold_rationale: vec![0; n],
            target_groups: Default::default(),
        }
    }

    #[test]
    fn full_ratio_masks_everything() {
        let e = example(7);
        let p = sample_mask(&e, 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(p.indices, (1..=7).collect::<Vec<_>>());
    }

    #[test]
    fn half_of_ten_is_five() {
        let p = sample_mask(&example(10), 0.5, &mut Rng::new(1)).unwrap();
        assert_eq!(p.indices.len(), 5);
        assert!(p.indices.iter().all(|&i| (1..=10).contains(&i)));
    }

    #[test]
    fn rounding_and_floor() {
        assert_eq!(mask_count(0.25, 10), 3);
        assert_eq!(mask_count(0.25, 2), 1);
        assert_eq!(mask_count(0.01, 5), 1);
        assert_eq!(mask_count(0.15, 10), 2);
    }

    #[test]
    fn deterministic_per_seed_example_epoch() {
        let e = example(12);
        let a = sample_mask(&e, 0.5, &mut mask_rng(3, "e", 2)).unwrap();
        let b = sample_mask(&e, 0.5, &mut mask_rng(3, "e", 2)).unwrap();
        assert_eq!(a, b);
        let c = sample_mask(&e, 0.5, &mut mask_rng(3, "e", 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_eligible_positions() {
        assert!(sample_mask(&example(0), 0.5, &mut Rng::new(1)).is_err());
    }
}
