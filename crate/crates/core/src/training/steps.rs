//! Single-batch loss and gradient computations. Each step zeroes the
//! model's gradients, accumulates the batch gradient into them and returns
//! the pre-update loss; the caller applies the optimizer.

use super::MaskPlan;
use crate::corpus::{Example, Vocabulary};
use crate::encoder::{EncoderInput, EncoderModel, HeadGradients};
use crate::error::{Error, Result};
use crate::numcore::{cross_entropy, ParameterSet, Rng, Scalar};

/// Loss of one batch and the number of units it is averaged over
/// (masked tokens for the token-level stages, posts for detection).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub count: usize,
}

fn check_plans(batch: &[&Example], plans: &[MaskPlan]) -> Result<usize> {
    if batch.len() != plans.len() {
        return Err(Error::input(format!("{} examples but {} mask plans", batch.len(), plans.len())));
    }
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let mut total = 0;
    for (e, p) in batch.iter().zip(plans) {
        if p.indices.iter().any(|&i| i == 0 || i + 1 >= e.attention_len) {
            return Err(Error::input(format!("mask plan for {} touches a non-word position", e.id)));
        }
        total += p.indices.len();
    }
    if total == 0 {
        return Err(Error::input("batch has no masked positions"));
    }
    Ok(total)
}

/// Masked rationale prediction: the model sees the gold rationale except at
/// the planned positions and is scored on those alone. The loss is the mean
/// over every masked position in the batch.
pub fn mrp_step<T: Scalar>(
    model: &mut EncoderModel<T>,
    batch: &[&Example],
    plans: &[MaskPlan],
    mut dropout: Option<&mut Rng>,
) -> Result<StepOutput> {
    let total = check_plans(batch, plans)?;
    model.zero_grads();
    let mut loss = 0.0;
    for (e, plan) in batch.iter().zip(plans) {
        let rats = plan.rationale_inputs(e);
        let input = EncoderInput::new(e.real_ids(), e.attention_len).with_rationales(&rats);
        let trace = model.run(&input, dropout.as_deref_mut())?;
        let targets: Vec<usize> = e.gold_rationale[..e.attention_len].iter().map(|&b| usize::from(b)).collect();
        let (l, dlog) = cross_entropy(&trace.rationale_logits, &targets, &plan.loss_mask(e))?;
        let w = plan.indices.len() as f64 / total as f64;
        loss += w * l.as_f64();
        let grads = HeadGradients {
            rationale: Some(dlog.scale(T::lit(w))),
            ..Default::default()
        };
        model.backward_all(&input, &trace, &grads)?;
    }
    finite(loss, "rationale loss")?;
    Ok(StepOutput { loss, count: total })
}

/// Masked language modelling: planned positions are replaced by the MASK id
/// and the vocabulary head predicts the original ids.
pub fn mlm_step<T: Scalar>(
    model: &mut EncoderModel<T>,
    batch: &[&Example],
    plans: &[MaskPlan],
    mut dropout: Option<&mut Rng>,
) -> Result<StepOutput> {
    let total = check_plans(batch, plans)?;
    if model.vocab_head.is_none() {
        return Err(Error::input("masked language modelling needs a vocabulary head"));
    }
    model.zero_grads();
    let mut loss = 0.0;
    for (e, plan) in batch.iter().zip(plans) {
        let mut ids = e.real_ids().to_vec();
        for &i in &plan.indices {
            ids[i] = Vocabulary::MASK_ID;
        }
        let input = EncoderInput::new(&ids, e.attention_len);
        let trace = model.run(&input, dropout.as_deref_mut())?;
        let logits = model.vocab_logits(&trace)?;
        let targets: Vec<usize> = e.real_ids().iter().map(|&t| t as usize).collect();
        let (l, dlog) = cross_entropy(&logits, &targets, &plan.loss_mask(e))?;
        let w = plan.indices.len() as f64 / total as f64;
        loss += w * l.as_f64();
        let grads = HeadGradients {
            vocab: Some(dlog.scale(T::lit(w))),
            ..Default::default()
        };
        model.backward_all(&input, &trace, &grads)?;
    }
    finite(loss, "token loss")?;
    Ok(StepOutput { loss, count: total })
}

/// Three-class detection on rationale-free input, mean over posts.
pub fn detect_step<T: Scalar>(
    model: &mut EncoderModel<T>,
    batch: &[&Example],
    mut dropout: Option<&mut Rng>,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    model.zero_grads();
    let w = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for e in batch {
        let input = EncoderInput::new(e.real_ids(), e.attention_len);
        let trace = model.run(&input, dropout.as_deref_mut())?;
        let (l, dlog) = cross_entropy(&trace.class_logits, &[e.class.index()], &[true])?;
        loss += w * l.as_f64();
        let grads = HeadGradients {
            class: Some(dlog.scale(T::lit(w))),
            ..Default::default()
        };
        model.backward_all(&input, &trace, &grads)?;
    }
    finite(loss, "detection loss")?;
    Ok(StepOutput { loss, count: batch.len() })
}

fn finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("{what} is {v}")))
    }
}
