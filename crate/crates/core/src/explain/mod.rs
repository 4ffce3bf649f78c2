//! Per-token importance scores for a detection model: last-layer CLS
//! attention and a LIME-style perturbation surrogate.

mod attention;
mod lime;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use attention::{attention_scores, cls_attention, HeadReduction};
pub use lime::{lime_scores, LimeOptions};

use crate::corpus::{Class, Example};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Anything that maps a real-length id sequence (CLS … SEP, no padding) to
/// class probabilities.
pub trait Classifier {
    fn class_probs(&self, ids: &[u32]) -> Result<Vec<f64>>;
}

impl<T: Scalar> Classifier for EncoderModel<T> {
    fn class_probs(&self, ids: &[u32]) -> Result<Vec<f64>> {
        self.class_probabilities(ids, ids.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Attention,
    Lime,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Attention, Method::Lime];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Attention => "attention",
            Method::Lime => "lime",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Method::Attention),
            "lime" => Ok(Method::Lime),
            other => Err(Error::input(format!("unknown method {other:?} (attention|lime)"))),
        }
    }
}

/// Scores over the example's word positions, max-normalised to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub method: Method,
    pub scores: Vec<f64>,
    pub predicted_class: Class,
    pub class_probs: Vec<f64>,
    /// Signed surrogate coefficients (LIME only).
    pub raw_coefficients: Option<Vec<f64>>,
}

/// One line of a score dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub method: Method,
    pub predicted_class: Class,
    pub class_probs: Vec<f64>,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_coefficients: Option<Vec<f64>>,
}

impl ScoreRecord {
    pub fn new(example: &Example, scores: &TokenScores) -> Self {
        ScoreRecord {
            id: example.id.clone(),
            method: scores.method,
            predicted_class: scores.predicted_class,
            class_probs: scores.class_probs.clone(),
            tokens: example.tokens.clone(),
            scores: scores.scores.clone(),
            raw_coefficients: scores.raw_coefficients.clone(),
        }
    }
}

/// Index of the largest probability, the first on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn max_normalise(values: &[f64]) -> Vec<f64> {
    let m = values.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        values.iter().map(|&v| v.max(0.0) / m).collect()
    } else {
        vec![0.0; values.len()]
    }
}

pub(crate) fn predicted(probs: &[f64]) -> Result<Class> {
    if probs.len() != 3 || probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::numeric(format!("bad class probabilities {probs:?}")));
    }
    Ok(Class::from_index(argmax(probs)).expect("three classes"))
}
