//! Transformer encoder with token, position and rationale embeddings, a
//! token-level rationale head and a CLS classification head.

pub mod checkpoint;
mod config;
mod forward;
mod model;

pub use checkpoint::{Checkpoint, CheckpointHeader, ParamEntry, CHECKPOINT_MAGIC};
pub use config::ModelConfig;
pub use forward::{EncoderInput, ForwardTrace, HeadGradients};
pub use model::{parameter_group, Block, ClassHead, EncoderModel, RationaleHead, RationaleInput, VocabHead};
