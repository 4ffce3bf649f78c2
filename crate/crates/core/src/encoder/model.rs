use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Parameter, ParameterSet, Rng, Scalar};

const INIT_STD: f64 = 0.02;

/// Rationale bit fed to the rationale embedding at one position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RationaleInput {
    Observed(bool),
    /// Hidden from the model: contributes a zero vector.
    Masked,
}

fn normal_param<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Parameter<T> {
    let data = (0..rows * cols).map(|_| T::lit(rng.normal() * INIT_STD)).collect();
    Parameter::new(Matrix::from_vec(rows, cols, data).expect("sized by construction"))
}

/// One pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub norm1_gain: Parameter<T>,
    pub norm1_bias: Parameter<T>,
    pub query: Parameter<T>,
    pub query_bias: Parameter<T>,
    pub key: Parameter<T>,
    pub key_bias: Parameter<T>,
    pub value: Parameter<T>,
    pub value_bias: Parameter<T>,
    pub output: Parameter<T>,
    pub output_bias: Parameter<T>,
    pub norm2_gain: Parameter<T>,
    pub norm2_bias: Parameter<T>,
    pub ff_in: Parameter<T>,
    pub ff_in_bias: Parameter<T>,
    pub ff_out: Parameter<T>,
    pub ff_out_bias: Parameter<T>,
}

impl<T: Scalar> Block<T> {
    fn new(d: usize, ff: usize, rng: &mut Rng) -> Self {
        Block {
            norm1_gain: Parameter::ones(1, d),
            norm1_bias: Parameter::zeros(1, d),
            query: normal_param(d, d, rng),
            query_bias: Parameter::zeros(1, d),
            key: normal_param(d, d, rng),
            key_bias: Parameter::zeros(1, d),
            value: normal_param(d, d, rng),
            value_bias: Parameter::zeros(1, d),
            output: normal_param(d, d, rng),
            output_bias: Parameter::zeros(1, d),
            norm2_gain: Parameter::ones(1, d),
            norm2_bias: Parameter::zeros(1, d),
            ff_in: normal_param(d, ff, rng),
            ff_in_bias: Parameter::zeros(1, ff),
            ff_out: normal_param(ff, d, rng),
            ff_out_bias: Parameter::zeros(1, d),
        }
    }
}

macro_rules! block_fields {
    ($m:ident) => {
        $m!(
            "norm1.gain" norm1_gain,
            "norm1.bias" norm1_bias,
            "attn.query.weight" query,
            "attn.query.bias" query_bias,
            "attn.key.weight" key,
            "attn.key.bias" key_bias,
            "attn.value.weight" value,
            "attn.value.bias" value_bias,
            "attn.output.weight" output,
            "attn.output.bias" output_bias,
            "norm2.gain" norm2_gain,
            "norm2.bias" norm2_bias,
            "ff.in.weight" ff_in,
            "ff.in.bias" ff_in_bias,
            "ff.out.weight" ff_out,
            "ff.out.bias" ff_out_bias
        )
    };
}

/// Token-level rationale classifier: dense, GELU, dense.
#[derive(Clone, Debug, PartialEq)]
pub struct RationaleHead<T> {
    pub hidden: Parameter<T>,
    pub hidden_bias: Parameter<T>,
    pub out: Parameter<T>,
    pub out_bias: Parameter<T>,
}

/// Linear classifier over the CLS representation.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassHead<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

/// Linear token predictor used only by the masked-language-model stage.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabHead<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

/// The full encoder: embeddings, blocks, final norm and three heads.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel<T> {
    pub config: ModelConfig,
    pub token_embedding: Parameter<T>,
    pub position_embedding: Parameter<T>,
    pub rationale_embedding: Parameter<T>,
    pub blocks: Vec<Block<T>>,
    pub final_norm_gain: Parameter<T>,
    pub final_norm_bias: Parameter<T>,
    pub rationale_head: RationaleHead<T>,
    pub class_head: ClassHead<T>,
    pub vocab_head: Option<VocabHead<T>>,
}

impl<T: Scalar> RationaleHead<T> {
    fn new(d: usize, classes: usize, rng: &mut Rng) -> Self {
        RationaleHead {
            hidden: normal_param(d, d, rng),
            hidden_bias: Parameter::zeros(1, d),
            out: normal_param(d, classes, rng),
            out_bias: Parameter::zeros(1, classes),
        }
    }
}

impl<T: Scalar> ClassHead<T> {
    pub fn new(d: usize, classes: usize, rng: &mut Rng) -> Self {
        ClassHead {
            weight: normal_param(d, classes, rng),
            bias: Parameter::zeros(1, classes),
        }
    }
}

impl<T: Scalar> VocabHead<T> {
    pub fn new(d: usize, vocab: usize, rng: &mut Rng) -> Self {
        VocabHead {
            weight: normal_param(d, vocab, rng),
            bias: Parameter::zeros(1, vocab),
        }
    }
}

impl<T: Scalar> EncoderModel<T> {
    /// Randomly initialised model: N(0, 0.02) weights, zero biases, unit
    /// norm gains.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let token_embedding = normal_param(config.vocab_size, d, rng);
        let position_embedding = normal_param(config.max_len, d, rng);
        let rationale_embedding = normal_param(config.n_rationale_classes, d, rng);
        let blocks = (0..config.n_layers)
            .map(|_| Block::new(d, config.ff_dim, rng))
            .collect();
        let rationale_head = RationaleHead::new(d, config.n_rationale_classes, rng);
        let class_head = ClassHead::new(d, config.n_classes, rng);
        Ok(EncoderModel {
            token_embedding,
            position_embedding,
            rationale_embedding,
            blocks,
            final_norm_gain: Parameter::ones(1, d),
            final_norm_bias: Parameter::zeros(1, d),
            rationale_head,
            class_head,
            vocab_head: None,
            config,
        })
    }

    /// Replaces the class head with a freshly initialised one.
    pub fn reset_class_head(&mut self, rng: &mut Rng) {
        self.class_head = ClassHead::new(self.config.d_model, self.config.n_classes, rng);
    }

    pub fn attach_vocab_head(&mut self, rng: &mut Rng) {
        self.vocab_head = Some(VocabHead::new(self.config.d_model, self.config.vocab_size, rng));
    }

    /// `H⁽⁰⁾ = token + position + rationale embeddings`.
    ///
    /// The rationale term is the zero vector at CLS (position 0), SEP
    /// (`real_len − 1`), padding, masked positions, and everywhere when
    /// `rationales` is `None`.
    pub fn embed(
        &self,
        token_ids: &[u32],
        real_len: usize,
        rationales: Option<&[RationaleInput]>,
    ) -> Result<Matrix<T>> {
        let n = token_ids.len();
        self.check_input(token_ids, real_len, rationales)?;
        let d = self.config.d_model;
        let mut h = Matrix::zeros(n, d);
        for (i, &id) in token_ids.iter().enumerate() {
            let tok = self.token_embedding.value.row(id as usize);
            let pos = self.position_embedding.value.row(i);
            let row = h.row_mut(i);
            for c in 0..d {
                row[c] = tok[c] + pos[c];
            }
            if let Some(bit) = observed_bit(rationales, i, real_len) {
                let r = self.rationale_embedding.value.row(usize::from(bit));
                for c in 0..d {
                    row[c] += r[c];
                }
            }
        }
        Ok(h)
    }

    pub(crate) fn check_input(
        &self,
        token_ids: &[u32],
        real_len: usize,
        rationales: Option<&[RationaleInput]>,
    ) -> Result<()> {
        let n = token_ids.len();
        if n > self.config.max_len {
            return Err(Error::input(format!(
                "sequence of {n} tokens exceeds max_len {}",
                self.config.max_len
            )));
        }
        if real_len > n {
            return Err(Error::input(format!("real_len {real_len} exceeds sequence length {n}")));
        }
        if let Some(&bad) = token_ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::input(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if let Some(r) = rationales {
            if r.len() != n {
                return Err(Error::input(format!(
                    "{} rationale inputs for {n} tokens",
                    r.len()
                )));
            }
        }
        Ok(())
    }
}

/// The rationale bit whose embedding is added at position `i`, if any.
pub(crate) fn observed_bit(rationales: Option<&[RationaleInput]>, i: usize, real_len: usize) -> Option<bool> {
    let r = rationales?;
    if i == 0 || i + 1 >= real_len {
        return None;
    }
    match r[i] {
        RationaleInput::Observed(b) => Some(b),
        RationaleInput::Masked => None,
    }
}

macro_rules! visit_block {
    ($blk:expr, $prefix:expr, $f:expr, $($name:literal $field:ident),*) => {
        $( $f(&format!("{}.{}", $prefix, $name), &$blk.$field); )*
    };
}

macro_rules! visit_block_mut {
    ($blk:expr, $prefix:expr, $f:expr, $($name:literal $field:ident),*) => {
        $( $f(&format!("{}.{}", $prefix, $name), &mut $blk.$field); )*
    };
}

impl<T: Scalar> ParameterSet<T> for EncoderModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter<T>)) {
        f("embeddings.token", &self.token_embedding);
        f("embeddings.position", &self.position_embedding);
        f("embeddings.rationale", &self.rationale_embedding);
        for (i, b) in self.blocks.iter().enumerate() {
            let prefix = format!("blocks.{i}");
            macro_rules! go {
                ($($name:literal $field:ident),*) => { visit_block!(b, prefix, f, $($name $field),*) };
            }
            block_fields!(go);
        }
        f("final_norm.gain", &self.final_norm_gain);
        f("final_norm.bias", &self.final_norm_bias);
        f("rationale_head.hidden.weight", &self.rationale_head.hidden);
        f("rationale_head.hidden.bias", &self.rationale_head.hidden_bias);
        f("rationale_head.out.weight", &self.rationale_head.out);
        f("rationale_head.out.bias", &self.rationale_head.out_bias);
        f("class_head.weight", &self.class_head.weight);
        f("class_head.bias", &self.class_head.bias);
        if let Some(v) = &self.vocab_head {
            f("vocab_head.weight", &v.weight);
            f("vocab_head.bias", &v.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<T>)) {
        f("embeddings.token", &mut self.token_embedding);
        f("embeddings.position", &mut self.position_embedding);
        f("embeddings.rationale", &mut self.rationale_embedding);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("blocks.{i}");
            macro_rules! go {
                ($($name:literal $field:ident),*) => { visit_block_mut!(b, prefix, f, $($name $field),*) };
            }
            block_fields!(go);
        }
        f("final_norm.gain", &mut self.final_norm_gain);
        f("final_norm.bias", &mut self.final_norm_bias);
        f("rationale_head.hidden.weight", &mut self.rationale_head.hidden);
        f("rationale_head.hidden.bias", &mut self.rationale_head.hidden_bias);
        f("rationale_head.out.weight", &mut self.rationale_head.out);
        f("rationale_head.out.bias", &mut self.rationale_head.out_bias);
        f("class_head.weight", &mut self.class_head.weight);
        f("class_head.bias", &mut self.class_head.bias);
        if let Some(v) = &mut self.vocab_head {
            f("vocab_head.weight", &mut v.weight);
            f("vocab_head.bias", &mut v.bias);
        }
    }
}

/// Coarse parameter group of a manifest name: `embeddings`, `attention`,
/// `feedforward`, `norms`, `rationale_head`, `class_head` or `vocab_head`.
pub fn parameter_group(name: &str) -> String {
    if name.starts_with("embeddings.") {
        "embeddings".into()
    } else if name.contains(".attn.") {
        "attention".into()
    } else if name.contains(".ff.") {
        "feedforward".into()
    } else if name.contains("norm") {
        "norms".into()
    } else {
        name.split('.').next().unwrap_or(name).to_string()
    }
}
