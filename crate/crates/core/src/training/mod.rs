//! Stage-1 rationale pretraining (MRP, RP, MLM) and detection finetuning.

mod config;
mod driver;
mod eval;
mod mask;
mod optimizer;
pub mod steps;

pub use config::{OptimizerKind, Stage, TrainConfig, DETECT_LR, MLM_TOKEN_RATIO, STAGE1_LR};
pub use driver::{detect_finetune, init_model, same_architecture, train_stage1, EpochRecord, TrainingLog};
pub use eval::{eval_mask, evaluate_rationale_prediction, predict_probabilities, RationaleEval};
pub use mask::{mask_count, mask_rng, sample_mask, MaskPlan};
pub use optimizer::{Optimizer, BETA1, BETA2, EPSILON};
pub use steps::{detect_step, mlm_step, mrp_step, StepOutput};
