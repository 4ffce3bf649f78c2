//! Run configuration and its `key = value` file grammar.
//!
//! One assignment per line. `#` starts a comment, blank lines are ignored.
//! Keys are dotted paths into [`RunConfig`] (`model.d_model`,
//! `pretrain.mask_ratio`, `eval.lime.n_samples`, ...). Values are read as
//! JSON when they parse as such, otherwise as a bare string; list fields
//! also accept a comma-separated list (`eval.methods = attention,lime`).
//! String fields always take the raw text and `none` clears an optional one.
//! Later assignments win, so flags applied after the file override it.

use std::path::Path;

use mrp_core::encoder::ModelConfig;
use mrp_core::explain::{HeadReduction, LimeOptions, Method};
use mrp_core::metrics::{EvalOptions, GMB_POWER, IOU_MATCH, SCORE_THRESHOLD, TOP_K};
use mrp_core::training::{OptimizerKind, Stage, TrainConfig, DETECT_LR, MLM_TOKEN_RATIO, STAGE1_LR};
use mrp_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable giving the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MRP_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset JSON mapping post id to annotations.
    pub dataset: Option<String>,
    /// Split JSON with `train`/`val`/`test` id lists. A seeded 8:1:1
    /// partition is drawn when absent.
    pub split: Option<String>,
    pub min_freq: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: None,
            split: None,
            min_freq: 1,
        }
    }
}

/// Optimisation settings of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub mask_ratio: f64,
    pub mlm_token_ratio: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stage-1 checkpoint to start detection from (detect only).
    pub init_checkpoint: Option<String>,
}

impl StageConfig {
    fn with_lr(lr: f64) -> Self {
        StageConfig {
            mask_ratio: 0.5,
            mlm_token_ratio: MLM_TOKEN_RATIO,
            lr,
            optimizer: OptimizerKind::Adam,
            epochs: 10,
            batch_size: 32,
            init_checkpoint: None,
        }
    }

    pub fn train_config(&self, stage: Stage, seed: u64) -> TrainConfig {
        TrainConfig {
            stage,
            mask_ratio: self.mask_ratio,
            mlm_token_ratio: self.mlm_token_ratio,
            lr: self.lr,
            optimizer: self.optimizer,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            init_checkpoint: self.init_checkpoint.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub top_k: usize,
    pub gmb_power: f64,
    pub score_threshold: f64,
    pub iou_match: f64,
    pub head_reduction: HeadReduction,
    pub lime: LimeOptions,
    pub groups: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: Method::ALL.to_vec(),
            top_k: TOP_K,
            gmb_power: GMB_POWER,
            score_threshold: SCORE_THRESHOLD,
            iou_match: IOU_MATCH,
            head_reduction: HeadReduction::Mean,
            lime: LimeOptions::default(),
            groups: EvalOptions::default().groups,
        }
    }
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            gmb_power: self.gmb_power,
            score_threshold: self.score_threshold,
            iou_match: self.iou_match,
            top_k: self.top_k,
            groups: self.groups.clone(),
        }
    }
}

/// Everything a command needs. Serialised verbatim into every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub data: DataConfig,
    /// `vocab_size = 0` means "take it from the ingested vocabulary".
    pub model: ModelConfig,
    /// Stage-1 settings, shared by mrp, rp and mlm.
    pub pretrain: StageConfig,
    pub detect: StageConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: DEFAULT_OUTPUT_DIR.to_string(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            pretrain: StageConfig::with_lr(STAGE1_LR),
            detect: StageConfig::with_lr(DETECT_LR),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults with the output directory taken from the environment.
    pub fn from_env() -> Self {
        let mut c = RunConfig::default();
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                c.output_dir = dir;
            }
        }
        c
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Applies assignments in order; later ones win.
    pub fn apply<'a, I>(&mut self, assignments: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut value = self.to_value();
        for (key, raw) in assignments {
            set_path(&mut value, key, raw)?;
        }
        *self = serde_json::from_value(value).map_err(|e| Error::input(format!("config: {e}")))?;
        Ok(())
    }

    pub fn stage_config(&self, stage: Stage) -> TrainConfig {
        match stage {
            Stage::Detect => self.detect.train_config(stage, self.seed),
            _ => self.pretrain.train_config(stage, self.seed),
        }
    }
}

/// Parses the config file grammar into ordered `(key, value)` pairs.
pub fn parse_assignments(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_assignment(line).map_err(|e| Error::input(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Splits one `key = value` (or `key=value`) assignment.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let Some((k, v)) = s.split_once('=') else {
        return Err(Error::input(format!("expected key = value, got {s:?}")));
    };
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::input(format!("empty key in {s:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

pub fn load_assignments(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
    parse_assignments(&text)
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::input(format!("unknown config key {key:?}")))?;
    }
    *node = match node {
        // Optional fields in the config are all paths.
        Value::String(_) | Value::Null => {
            if raw.is_empty() || raw == "none" {
                Value::Null
            } else {
                Value::String(raw.to_string())
            }
        }
        Value::Array(_) => match serde_json::from_str::<Value>(raw) {
            Ok(v @ Value::Array(_)) => v,
            _ => Value::Array(
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Value::String(s.to_string()))
                    .collect(),
            ),
        },
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    };
    Ok(())
}
