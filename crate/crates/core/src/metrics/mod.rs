//! Evaluation: performance, subgroup bias AUCs and rationale
//! plausibility/faithfulness, assembled into a report.

mod auc;
mod bias;
mod faithfulness;
mod performance;
mod plausibility;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use auc::{auc, mann_whitney_2u};
pub use bias::{bias_aucs, bias_report, gmb, in_bnsp_set, in_bpsn_set, in_subgroup_set, BiasAucs, BiasReport, GMB_POWER};
pub use faithfulness::{faithfulness, select_words, top_k, Faithfulness, TOP_K};
pub use performance::{macro_f1, performance, Performance};
pub use plausibility::{
    average_precision, plausibility, span_iou, span_match, spans, threshold, token_f1, Plausibility, IOU_MATCH,
    SCORE_THRESHOLD,
};

use crate::corpus::{Class, Example, TARGET_GROUPS};
use crate::error::{Error, Result};
use crate::explain::{argmax, Classifier, Method};

/// A model's output on one post, with whatever token scores were computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold_class: Class,
    pub predicted_class: Class,
    pub class_probs: [f64; 3],
    /// `P(offensive) + P(hatespeech)`.
    pub toxic_score: f64,
    pub target_groups: BTreeSet<String>,
    /// Gold bits over word positions.
    pub gold_rationale: Vec<u8>,
    #[serde(default)]
    pub token_scores: BTreeMap<Method, Vec<f64>>,
}

impl PredictionRecord {
    pub fn new(example: &Example, class_probs: [f64; 3]) -> Result<Self> {
        let sum: f64 = class_probs.iter().sum();
        if class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::numeric(format!("class probabilities {class_probs:?} for {}", example.id)));
        }
        Ok(PredictionRecord {
            id: example.id.clone(),
            gold_class: example.class,
            predicted_class: Class::from_index(argmax(&class_probs))?,
            class_probs,
            toxic_score: class_probs[1] + class_probs[2],
            target_groups: example.target_groups.clone(),
            gold_rationale: example.word_rationale().to_vec(),
            token_scores: BTreeMap::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub gmb_power: f64,
    pub score_threshold: f64,
    pub iou_match: f64,
    pub top_k: usize,
    pub groups: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            gmb_power: GMB_POWER,
            score_threshold: SCORE_THRESHOLD,
            iou_match: IOU_MATCH,
            top_k: TOP_K,
            groups: TARGET_GROUPS.iter().map(|g| g.to_string()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplainMetrics {
    pub iou_f1: Option<f64>,
    pub token_f1: Option<f64>,
    pub auprc: Option<f64>,
    pub comprehensiveness: Option<f64>,
    pub sufficiency: Option<f64>,
    /// Non-normal posts the explanation metrics were averaged over.
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub performance: Performance,
    pub bias: BiasReport,
    pub explainability: BTreeMap<Method, ExplainMetrics>,
    pub options: EvalOptions,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

/// Builds the full report. `examples` must align with `records`.
/// Explanation metrics use the posts whose gold class is not normal.
pub fn evaluate<C: Classifier + ?Sized>(
    model_name: &str,
    model: &C,
    examples: &[Example],
    records: &[PredictionRecord],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if examples.len() != records.len() || examples.iter().zip(records).any(|(e, r)| e.id != r.id) {
        return Err(Error::input("examples and prediction records are not aligned"));
    }
    let performance = performance(records)?;
    let bias = bias_report(records, &opts.groups, opts.gmb_power);
    let mut methods: BTreeSet<Method> = BTreeSet::new();
    for r in records {
        methods.extend(r.token_scores.keys().copied());
    }
    let mut explainability = BTreeMap::new();
    for method in methods {
        let mut items = Vec::new();
        for (e, r) in examples.iter().zip(records) {
            if r.gold_class == Class::Normal {
                continue;
            }
            let scores = r
                .token_scores
                .get(&method)
                .ok_or_else(|| Error::input(format!("record {} lacks {method} scores", r.id)))?;
            items.push((e, scores.as_slice(), r.gold_rationale.as_slice()));
        }
        let plaus_items: Vec<(&[f64], &[u8])> = items.iter().map(|(_, s, g)| (*s, *g)).collect();
        let plaus = plausibility(&plaus_items, opts.score_threshold, opts.iou_match)?;
        let faith_items: Vec<(&Example, &[f64])> = items.iter().map(|(e, s, _)| (*e, *s)).collect();
        let faith = faithfulness(model, &faith_items, opts.top_k)?;
        explainability.insert(
            method,
            ExplainMetrics {
                iou_f1: plaus.map(|p| p.iou_f1),
                token_f1: plaus.map(|p| p.token_f1),
                auprc: plaus.map(|p| p.auprc),
                comprehensiveness: faith.map(|f| f.comprehensiveness),
                sufficiency: faith.map(|f| f.sufficiency),
                instances: items.len(),
            },
        );
    }
    Ok(EvalReport {
        model: model_name.to_string(),
        performance,
        bias,
        explainability,
        options: opts.clone(),
        run_config: serde_json::Value::Null,
    })
}

impl EvalReport {
    /// Flat `(model, metric, value)` rows; undefined values are `None`.
    pub fn rows(&self) -> Vec<(String, String, Option<f64>)> {
        let mut out = Vec::new();
        let mut push = |metric: String, v: Option<f64>| out.push((self.model.clone(), metric, v));
        push("accuracy".into(), Some(self.performance.accuracy));
        push("macro_f1".into(), Some(self.performance.macro_f1));
        push("auroc".into(), self.performance.auroc);
        push("gmb_subgroup".into(), self.bias.gmb_subgroup);
        push("gmb_bpsn".into(), self.bias.gmb_bpsn);
        push("gmb_bnsp".into(), self.bias.gmb_bnsp);
        for (g, b) in &self.bias.groups {
            push(format!("{g}.subgroup_auc"), b.subgroup);
            push(format!("{g}.bpsn_auc"), b.bpsn);
            push(format!("{g}.bnsp_auc"), b.bnsp);
        }
        for (m, x) in &self.explainability {
            push(format!("{m}.iou_f1"), x.iou_f1);
            push(format!("{m}.token_f1"), x.token_f1);
            push(format!("{m}.auprc"), x.auprc);
            push(format!("{m}.comprehensiveness"), x.comprehensiveness);
            push(format!("{m}.sufficiency"), x.sufficiency);
        }
        out
    }
}
