use serde::{Deserialize, Serialize};

use super::steps::{detect_step, mlm_step, mrp_step, StepOutput};
use super::{mask_rng, sample_mask, Optimizer, Stage, TrainConfig};
use crate::corpus::Example;
use crate::encoder::{EncoderModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub seed: u64,
    pub lr: f64,
    /// Mean training loss over the epoch, weighted by each batch's count.
    pub loss: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Fresh model for a run. Every stage draws its initial weights from the
/// same stream, so runs differing only in stage start identically.
pub fn init_model<T: Scalar>(config: ModelConfig, seed: u64) -> Result<EncoderModel<T>> {
    EncoderModel::new(config, &mut Rng::derive(seed, &[Rng::key("init")]))
}

/// Stage-1 training (MRP, RP or MLM) in place. MLM attaches a vocabulary
/// head if the model lacks one.
pub fn train_stage1<T: Scalar>(
    model: &mut EncoderModel<T>,
    train: &[Example],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainingLog> {
    cfg.validate()?;
    if !cfg.stage.is_pretraining() {
        return Err(Error::input("train_stage1 needs stage mrp, rp or mlm"));
    }
    if cfg.stage == Stage::Mlm && model.vocab_head.is_none() {
        model.attach_vocab_head(&mut Rng::derive(cfg.seed, &[Rng::key("vocab-head")]));
    }
    let ratio = cfg.effective_mask_ratio();
    run_epochs(model, train, cfg, on_epoch, &mut |model, batch, epoch, dropout| {
        let mut plans = Vec::with_capacity(batch.len());
        for e in batch {
            let mut rng = mask_rng(cfg.seed, &e.id, epoch as u64);
            let r = if cfg.stage == Stage::Mlm { cfg.mlm_token_ratio } else { ratio };
            plans.push(sample_mask(e, r, &mut rng)?);
        }
        match cfg.stage {
            Stage::Mlm => mlm_step(model, batch, &plans, dropout),
            _ => mrp_step(model, batch, &plans, dropout),
        }
    })
}

/// Detection finetuning. Encoder and embeddings come from `init` when given
/// (which must match `config` structurally); the class head is always
/// re-initialised and any vocabulary head dropped.
pub fn detect_finetune<T: Scalar>(
    init: Option<EncoderModel<T>>,
    config: &ModelConfig,
    train: &[Example],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(EncoderModel<T>, TrainingLog)> {
    cfg.validate()?;
    if cfg.stage != Stage::Detect {
        return Err(Error::input("detect_finetune needs stage detect"));
    }
    let mut model = match init {
        Some(m) => {
            if !same_architecture(&m.config, config) {
                return Err(Error::input("initial checkpoint architecture does not match the model config"));
            }
            m
        }
        None => init_model(config.clone(), cfg.seed)?,
    };
    model.config.dropout_rate = config.dropout_rate;
    model.vocab_head = None;
    model.reset_class_head(&mut Rng::derive(cfg.seed, &[Rng::key("class-head")]));
    let log = run_epochs(&mut model, train, cfg, on_epoch, &mut |model, batch, _, dropout| {
        detect_step(model, batch, dropout)
    })?;
    Ok((model, log))
}

/// Equal in every field that shapes a parameter.
pub fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    a.d_model == b.d_model
        && a.n_layers == b.n_layers
        && a.n_heads == b.n_heads
        && a.ff_dim == b.ff_dim
        && a.max_len == b.max_len
        && a.vocab_size == b.vocab_size
        && a.n_classes == b.n_classes
        && a.n_rationale_classes == b.n_rationale_classes
}

type StepFn<'a, T> =
    dyn FnMut(&mut EncoderModel<T>, &[&Example], usize, Option<&mut Rng>) -> Result<StepOutput> + 'a;

fn run_epochs<T: Scalar>(
    model: &mut EncoderModel<T>,
    train: &[Example],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
    step: &mut StepFn<'_, T>,
) -> Result<TrainingLog> {
    if train.is_empty() {
        return Err(Error::input("no training examples"));
    }
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut log = TrainingLog {
        config: cfg.clone(),
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let use_dropout = model.config.dropout_rate > 0.0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::derive(cfg.seed, &[Rng::key("shuffle"), epoch as u64]).shuffle(&mut order);
        let mut dropout = Rng::derive(cfg.seed, &[Rng::key("dropout"), epoch as u64]);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let out = step(model, &batch, epoch, use_dropout.then_some(&mut dropout))?;
            opt.step(model, cfg.lr)?;
            sum += out.loss * out.count as f64;
            count += out.count;
        }
        let record = EpochRecord {
            epoch,
            stage: cfg.stage,
            seed: cfg.seed,
            lr: cfg.lr,
            loss: sum / count as f64,
            steps: opt.steps_taken(),
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}
