//! Rationale-supervised hate-speech classification.
//!
//! A small transformer encoder is first trained to predict partially masked
//! human rationales (tokens that annotators marked as the reason for an
//! abusive label), then finetuned for three-class detection. The crate also
//! carries the evaluation harness: performance, subgroup bias AUCs and
//! rationale plausibility/faithfulness for attention and LIME explanations.
//!
//! All numeric code is generic over [`numcore::Scalar`]; the aliases below
//! fix the element type for the common cases.

pub mod error;
pub mod explain;
pub mod metrics;
pub mod corpus;
pub mod encoder;
pub mod numcore;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

pub type Matrix32 = numcore::Matrix<f32>;
pub type Matrix64 = numcore::Matrix<f64>;
pub type Encoder32 = encoder::EncoderModel<f32>;
pub type Encoder64 = encoder::EncoderModel<f64>;
