use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters of the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub n_rationale_classes: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 256,
            max_len: 64,
            vocab_size: 0,
            n_classes: 3,
            n_rationale_classes: 2,
            dropout_rate: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::input(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_len < 3 {
            return Err(Error::input(format!("max_len {} must be at least 3", self.max_len)));
        }
        if self.vocab_size == 0 {
            return Err(Error::input("vocab_size must be positive"));
        }
        if self.ff_dim == 0 || self.n_classes == 0 || self.n_rationale_classes == 0 {
            return Err(Error::input("ff_dim and class counts must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::input(format!("dropout_rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        let mut c = ModelConfig {
            vocab_size: 10,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.max_len = 2;
        assert!(c.validate().is_err());
    }
}
