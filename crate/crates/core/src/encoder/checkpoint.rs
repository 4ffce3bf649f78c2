//! Binary checkpoint format.
//!
//! Layout: the 8-byte magic `MRPCKPT1`, a little-endian `u64` header length,
//! the JSON header, then every parameter as raw little-endian `f32` values in
//! manifest order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderModel, ModelConfig, VocabHead};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParameterSet, Rng, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MRPCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub stage: String,
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Full run configuration of the producing command, if any.
    #[serde(default)]
    pub run_config: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

/// A header plus the model it describes.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub model: EncoderModel<T>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Wraps a model; the parameter manifest is taken from the model.
    pub fn new(model: EncoderModel<T>, stage: &str, seed: u64, epoch: usize) -> Self {
        let params = model
            .manifest()
            .into_iter()
            .map(|(name, (rows, cols))| ParamEntry { name, rows, cols })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                config: model.config.clone(),
                stage: stage.to_string(),
                seed,
                epoch,
                metrics: BTreeMap::new(),
                run_config: serde_json::Value::Null,
                params,
            },
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let manifest: Vec<ParamEntry> = self
            .model
            .manifest()
            .into_iter()
            .map(|(name, (rows, cols))| ParamEntry { name, rows, cols })
            .collect();
        if manifest != self.header.params {
            return Err(Error::shape("checkpoint header manifest does not match model"));
        }
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(4 * self.model.parameter_count());
        self.model.visit(&mut |_, p| {
            for &v in p.value.data() {
                buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        });
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::input("not a checkpoint file (bad magic)"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;

        // Weights are overwritten below; the generator only sizes the tensors.
        let mut model = EncoderModel::new(header.config.clone(), &mut Rng::new(0))?;
        if header.params.iter().any(|p| p.name.starts_with("vocab_head.")) {
            model.vocab_head = Some(VocabHead::new(header.config.d_model, header.config.vocab_size, &mut Rng::new(0)));
        }
        let expected: Vec<ParamEntry> = model
            .manifest()
            .into_iter()
            .map(|(name, (rows, cols))| ParamEntry { name, rows, cols })
            .collect();
        if expected != header.params {
            return Err(Error::shape("checkpoint manifest does not match its model config"));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let total: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
        if payload.len() != 4 * total {
            return Err(Error::input(format!(
                "checkpoint payload has {} bytes, expected {}",
                payload.len(),
                4 * total
            )));
        }
        let mut offset = 0;
        let mut failure = None;
        model.visit_mut(&mut |name, p| {
            let n = p.value.len();
            let data: Vec<T> = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
                .collect();
            offset += 4 * n;
            let (rows, cols) = p.shape();
            match Matrix::from_vec(rows, cols, data) {
                Ok(m) if m.is_finite() => p.value = m,
                Ok(_) => failure = Some(Error::numeric(format!("non-finite values in {name}"))),
                Err(e) => failure = Some(e),
            }
            p.zero_grad();
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(Checkpoint { header, model })
    }
}
