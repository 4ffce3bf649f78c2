use serde::{Deserialize, Serialize};

use super::{max_normalise, predicted, Method, TokenScores};
use crate::corpus::Example;
use crate::encoder::{EncoderInput, EncoderModel};
use crate::error::Result;
use crate::numcore::{softmax_in_place, Scalar};

/// How per-head CLS rows are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadReduction {
    #[default]
    Mean,
    Max,
}

/// Last-layer attention from CLS to each word position, combined over
/// heads, before normalisation.
pub fn cls_attention<T: Scalar>(model: &EncoderModel<T>, example: &Example, reduction: HeadReduction) -> Result<Vec<f64>> {
    Ok(run(model, example, reduction)?.0)
}

fn run<T: Scalar>(model: &EncoderModel<T>, example: &Example, reduction: HeadReduction) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = model.run(&EncoderInput::new(example.real_ids(), example.attention_len), None)?;
    let last = trace.attention.last().expect("at least one layer");
    let words = example.word_positions();
    let mut combined = vec![0.0; words.len()];
    for (h, head) in last.iter().enumerate() {
        let row = head.row(0);
        for (c, j) in combined.iter_mut().zip(words.clone()) {
            let w = row[j].as_f64();
            *c = match reduction {
                HeadReduction::Mean => *c + w,
                HeadReduction::Max if h == 0 => w,
                HeadReduction::Max => c.max(w),
            };
        }
    }
    if reduction == HeadReduction::Mean {
        let n = last.len() as f64;
        combined.iter_mut().for_each(|c| *c /= n);
    }
    let mut probs: Vec<f64> = trace.class_logits.row(0).iter().map(|v| v.as_f64()).collect();
    softmax_in_place(&mut probs);
    Ok((combined, probs))
}

pub fn attention_scores<T: Scalar>(model: &EncoderModel<T>, example: &Example, reduction: HeadReduction) -> Result<TokenScores> {
    let (raw, probs) = run(model, example, reduction)?;
    Ok(TokenScores {
        method: Method::Attention,
        scores: max_normalise(&raw),
        predicted_class: predicted(&probs)?,
        class_probs: probs,
        raw_coefficients: None,
    })
}
