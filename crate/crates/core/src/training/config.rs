use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training stage. `Rp` is `Mrp` with every rationale masked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mrp,
    Rp,
    Mlm,
    Detect,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Mrp => "mrp",
            Stage::Rp => "rp",
            Stage::Mlm => "mlm",
            Stage::Detect => "detect",
        }
    }

    pub fn is_pretraining(self) -> bool {
        self != Stage::Detect
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        match s {
            "mrp" => Ok(Stage::Mrp),
            "rp" => Ok(Stage::Rp),
            "mlm" => Ok(Stage::Mlm),
            "detect" => Ok(Stage::Detect),
            other => Err(Error::input(format!("unknown stage {other:?} (mrp|rp|mlm|detect)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Radam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "radam" => Ok(OptimizerKind::Radam),
            other => Err(Error::input(format!("unknown optimizer {other:?} (adam|radam)"))),
        }
    }
}

/// Fraction of real word tokens replaced by MASK in the MLM stage.
pub const MLM_TOKEN_RATIO: f64 = 0.15;
pub const STAGE1_LR: f64 = 5e-5;
pub const DETECT_LR: f64 = 2e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    /// Fraction of eligible rationale positions hidden per example (MRP).
    pub mask_ratio: f64,
    pub mlm_token_ratio: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_checkpoint: Option<String>,
}

impl TrainConfig {
    pub fn for_stage(stage: Stage) -> Self {
        TrainConfig {
            stage,
            mask_ratio: if stage == Stage::Rp { 1.0 } else { 0.5 },
            mlm_token_ratio: MLM_TOKEN_RATIO,
            lr: if stage == Stage::Detect { DETECT_LR } else { STAGE1_LR },
            optimizer: OptimizerKind::Adam,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            init_checkpoint: None,
        }
    }

    /// The masking ratio actually used: RP always hides everything.
    pub fn effective_mask_ratio(&self) -> f64 {
        if self.stage == Stage::Rp {
            1.0
        } else {
            self.mask_ratio
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.effective_mask_ratio();
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::input(format!("mask_ratio {r} not in (0, 1]")));
        }
        if !(self.mlm_token_ratio > 0.0 && self.mlm_token_ratio <= 1.0) {
            return Err(Error::input(format!("mlm_token_ratio {} not in (0, 1]", self.mlm_token_ratio)));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::input(format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }
}
