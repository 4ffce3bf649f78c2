use serde::{Deserialize, Serialize};

use super::{sample_mask, MaskPlan};
use crate::corpus::Example;
use crate::encoder::{EncoderInput, EncoderModel};
use crate::error::Result;
use crate::numcore::{cross_entropy, Rng, Scalar};

/// Masked rationale prediction quality on held-out posts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationaleEval {
    /// Mean cross-entropy over all masked positions.
    pub loss: f64,
    /// Fraction of masked positions whose argmax matches the gold bit.
    pub accuracy: f64,
    pub masked_tokens: usize,
}

/// Evaluation masks depend on the seed and post id only.
pub fn eval_mask(example: &Example, ratio: f64, seed: u64) -> Result<MaskPlan> {
    sample_mask(example, ratio, &mut Rng::derive(seed, &[Rng::key("eval-mask"), Rng::key(&example.id)]))
}

pub fn evaluate_rationale_prediction<T: Scalar>(
    model: &EncoderModel<T>,
    examples: &[Example],
    ratio: f64,
    seed: u64,
) -> Result<RationaleEval> {
    let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
    for e in examples {
        let plan = eval_mask(e, ratio, seed)?;
        let rats = plan.rationale_inputs(e);
        let input = EncoderInput::new(e.real_ids(), e.attention_len).with_rationales(&rats);
        let trace = model.run(&input, None)?;
        let targets: Vec<usize> = e.gold_rationale[..e.attention_len].iter().map(|&b| usize::from(b)).collect();
        let (l, _) = cross_entropy(&trace.rationale_logits, &targets, &plan.loss_mask(e))?;
        let k = plan.indices.len();
        loss += l.as_f64() * k as f64;
        for &i in &plan.indices {
            let row = trace.rationale_logits.row(i);
            let pred = usize::from(row[1] > row[0]);
            correct += usize::from(pred == targets[i]);
        }
        total += k;
    }
    if total == 0 {
        return Ok(RationaleEval { loss: f64::NAN, accuracy: f64::NAN, masked_tokens: 0 });
    }
    Ok(RationaleEval {
        loss: loss / total as f64,
        accuracy: correct as f64 / total as f64,
        masked_tokens: total,
    })
}

/// Class probabilities for each example (rationale-free input).
pub fn predict_probabilities<T: Scalar>(model: &EncoderModel<T>, examples: &[Example]) -> Result<Vec<[f64; 3]>> {
    examples
        .iter()
        .map(|e| {
            let p = model.class_probabilities(e.real_ids(), e.attention_len)?;
            let mut out = [0.0; 3];
            for (o, v) in out.iter_mut().zip(&p) {
                *o = *v;
            }
            Ok(out)
        })
        .collect()
}
