//! Forward and backward passes of the encoder over a single sequence.

use super::model::{observed_bit, Block, EncoderModel, RationaleInput};
use crate::error::{Error, Result};
use crate::numcore::ops::{
    gelu, gelu_grad, layer_norm_rows, layer_norm_rows_backward, softmax_backward_row, softmax_in_place,
    LayerNormCache,
};
use crate::numcore::{Matrix, Rng, Scalar};

/// One encoder input: ids (CLS first), real length and optional rationale bits.
#[derive(Clone, Copy, Debug)]
pub struct EncoderInput<'a> {
    pub token_ids: &'a [u32],
    pub real_len: usize,
    pub rationales: Option<&'a [RationaleInput]>,
}

impl<'a> EncoderInput<'a> {
    pub fn new(token_ids: &'a [u32], real_len: usize) -> Self {
        EncoderInput {
            token_ids,
            real_len,
            rationales: None,
        }
    }

    pub fn with_rationales(mut self, rationales: &'a [RationaleInput]) -> Self {
        self.rationales = Some(rationales);
        self
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    norm1: Vec<LayerNormCache<T>>,
    normed1: Matrix<T>,
    query: Matrix<T>,
    key: Matrix<T>,
    value: Matrix<T>,
    context: Matrix<T>,
    attn_dropout: Option<Vec<T>>,
    norm2: Vec<LayerNormCache<T>>,
    normed2: Matrix<T>,
    ff_pre: Matrix<T>,
    ff_act: Matrix<T>,
    ff_dropout: Option<Vec<T>>,
}

#[derive(Clone, Debug)]
struct TraceCache<T> {
    embed_dropout: Option<Vec<T>>,
    blocks: Vec<BlockCache<T>>,
    final_norm: Vec<LayerNormCache<T>>,
    rationale_pre: Matrix<T>,
    rationale_act: Matrix<T>,
}

/// Everything produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// `H⁽⁰⁾ … H⁽ᴸ⁾`: the embedding sum followed by each block's output.
    pub hidden: Vec<Matrix<T>>,
    /// Final layer-normed hidden states read by the heads.
    pub output: Matrix<T>,
    /// Attention probabilities, indexed `[layer][head]`, each `n × n`.
    pub attention: Vec<Vec<Matrix<T>>>,
    pub rationale_logits: Matrix<T>,
    pub class_logits: Matrix<T>,
    pub real_len: usize,
    cache: TraceCache<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn seq_len(&self) -> usize {
        self.output.rows()
    }
}

/// Upstream gradients for whichever heads contributed to the loss.
#[derive(Clone, Debug, Default)]
pub struct HeadGradients<T> {
    pub rationale: Option<Matrix<T>>,
    pub class: Option<Matrix<T>>,
    pub vocab: Option<Matrix<T>>,
}

fn dropout_mask<T: Scalar>(len: usize, rate: f64, rng: &mut Rng) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect()
}

fn apply_mask<T: Scalar>(m: &mut Matrix<T>, mask: &Option<Vec<T>>) {
    if let Some(mask) = mask {
        for (v, &k) in m.data_mut().iter_mut().zip(mask) {
            *v *= k;
        }
    }
}

fn add_bias<T: Scalar>(m: &mut Matrix<T>, bias: &Matrix<T>) -> Result<()> {
    m.add_row_broadcast(bias.data())
}

impl<T: Scalar> EncoderModel<T> {
    /// Embeds and runs the full model.
    pub fn run(&self, input: &EncoderInput<'_>, dropout: Option<&mut Rng>) -> Result<ForwardTrace<T>> {
        let h0 = self.embed(input.token_ids, input.real_len, input.rationales)?;
        self.forward(h0, input.real_len, dropout)
    }

    /// Runs the blocks and both heads from `H⁽⁰⁾`. Keys at positions
    /// `>= real_len` are excluded from attention.
    pub fn forward(&self, h0: Matrix<T>, real_len: usize, mut dropout: Option<&mut Rng>) -> Result<ForwardTrace<T>> {
        let n = h0.rows();
        if real_len < 2 || real_len > n {
            return Err(Error::input(format!(
                "real_len {real_len} must cover CLS and SEP within {n} positions"
            )));
        }
        if h0.cols() != self.config.d_model {
            return Err(Error::shape(format!(
                "hidden width {} vs d_model {}",
                h0.cols(),
                self.config.d_model
            )));
        }
        let rate = self.config.dropout_rate;
        let use_dropout = rate > 0.0 && dropout.is_some();
        let mut h0 = h0;
        let embed_dropout = if use_dropout {
            let mask = dropout_mask(h0.len(), rate, dropout.as_deref_mut().expect("checked"));
            Some(mask)
        } else {
            None
        };
        apply_mask(&mut h0, &embed_dropout);
        h0.ensure_finite("embeddings")?;

        let mut hidden = vec![h0];
        let mut attention = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter().enumerate() {
            let x = hidden.last().expect("non-empty");
            let (y, probs, cache) = self.block_forward(block, x, real_len, use_dropout, dropout.as_deref_mut())?;
            y.ensure_finite(&format!("block {l} output"))?;
            hidden.push(y);
            attention.push(probs);
            caches.push(cache);
        }

        let last = hidden.last().expect("non-empty");
        let (output, final_norm) =
            layer_norm_rows(last, self.final_norm_gain.value.data(), self.final_norm_bias.value.data())?;

        let (rationale_pre, rationale_act, rationale_logits) = self.rationale_head_forward(&output)?;
        let class_logits = self.class_logits_for(&output)?;
        rationale_logits.ensure_finite("rationale logits")?;
        class_logits.ensure_finite("class logits")?;

        Ok(ForwardTrace {
            hidden,
            output,
            attention,
            rationale_logits,
            class_logits,
            real_len,
            cache: TraceCache {
                embed_dropout,
                blocks: caches,
                final_norm,
                rationale_pre,
                rationale_act,
            },
        })
    }

    /// Rationale head applied to every position of the final hidden states.
    pub fn rationale_logits(&self, trace: &ForwardTrace<T>) -> Matrix<T> {
        trace.rationale_logits.clone()
    }

    /// Class head applied to the CLS position.
    pub fn class_logits(&self, trace: &ForwardTrace<T>) -> Matrix<T> {
        trace.class_logits.clone()
    }

    /// Rationale head over arbitrary hidden states (`n × d` → `n × 2`).
    pub fn rationale_logits_for(&self, hidden: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.rationale_head_forward(hidden)?.2)
    }

    fn rationale_head_forward(&self, hidden: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
        let head = &self.rationale_head;
        let mut pre = hidden.matmul(&head.hidden.value)?;
        add_bias(&mut pre, &head.hidden_bias.value)?;
        let act = pre.map(gelu);
        let mut logits = act.matmul(&head.out.value)?;
        add_bias(&mut logits, &head.out_bias.value)?;
        Ok((pre, act, logits))
    }

    /// Class head over row 0 (CLS) of arbitrary hidden states.
    pub fn class_logits_for(&self, output: &Matrix<T>) -> Result<Matrix<T>> {
        let cls = output.slice_rows(0, 1);
        let mut logits = cls.matmul(&self.class_head.weight.value)?;
        add_bias(&mut logits, &self.class_head.bias.value)?;
        Ok(logits)
    }

    /// Softmax over the class logits of a rationale-free forward pass.
    pub fn class_probabilities(&self, token_ids: &[u32], real_len: usize) -> Result<Vec<f64>> {
        let trace = self.run(&EncoderInput::new(&token_ids[..real_len.min(token_ids.len())], real_len), None)?;
        trace.class_logits.ensure_finite("class logits")?;
        let mut p: Vec<f64> = trace.class_logits.row(0).iter().map(|v| v.as_f64()).collect();
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Token logits from the vocabulary head (masked-language-model stage).
    pub fn vocab_logits(&self, trace: &ForwardTrace<T>) -> Result<Matrix<T>> {
        let head = self
            .vocab_head
            .as_ref()
            .ok_or_else(|| Error::input("model has no vocabulary head attached"))?;
        let mut logits = trace.output.matmul(&head.weight.value)?;
        add_bias(&mut logits, &head.bias.value)?;
        logits.ensure_finite("vocab logits")?;
        Ok(logits)
    }

    fn block_forward(
        &self,
        block: &Block<T>,
        x: &Matrix<T>,
        real_len: usize,
        use_dropout: bool,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Matrix<T>, Vec<Matrix<T>>, BlockCache<T>)> {
        let n = x.rows();
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = T::one() / T::lit(dh as f64).sqrt();

        let (normed1, norm1) = layer_norm_rows(x, block.norm1_gain.value.data(), block.norm1_bias.value.data())?;
        let mut query = normed1.matmul(&block.query.value)?;
        add_bias(&mut query, &block.query_bias.value)?;
        let mut key = normed1.matmul(&block.key.value)?;
        add_bias(&mut key, &block.key_bias.value)?;
        let mut value = normed1.matmul(&block.value.value)?;
        add_bias(&mut value, &block.value_bias.value)?;

        let mut context = Matrix::zeros(n, d);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let off = h * dh;
            let mut p = Matrix::zeros(n, n);
            for i in 0..n {
                let q = &query.row(i)[off..off + dh];
                let row = p.row_mut(i);
                for j in 0..n {
                    if j >= real_len {
                        row[j] = T::neg_infinity();
                        continue;
                    }
                    let k = &key.row(j)[off..off + dh];
                    let mut s = T::zero();
                    for c in 0..dh {
                        s += q[c] * k[c];
                    }
                    row[j] = s * scale;
                }
                softmax_in_place(row);
            }
            for i in 0..n {
                for j in 0..real_len {
                    let w = p.get(i, j);
                    let v = &value.row(j)[off..off + dh];
                    let out = &mut context.row_mut(i)[off..off + dh];
                    for c in 0..dh {
                        out[c] += w * v[c];
                    }
                }
            }
            probs.push(p);
        }

        let mut attn_out = context.matmul(&block.output.value)?;
        add_bias(&mut attn_out, &block.output_bias.value)?;
        let attn_dropout = if use_dropout {
            Some(dropout_mask(attn_out.len(), self.config.dropout_rate, rng.as_deref_mut().expect("dropout rng")))
        } else {
            None
        };
        apply_mask(&mut attn_out, &attn_dropout);
        let mid = x.add(&attn_out)?;

        let (normed2, norm2) = layer_norm_rows(&mid, block.norm2_gain.value.data(), block.norm2_bias.value.data())?;
        let mut ff_pre = normed2.matmul(&block.ff_in.value)?;
        add_bias(&mut ff_pre, &block.ff_in_bias.value)?;
        let ff_act = ff_pre.map(gelu);
        let mut ff_out = ff_act.matmul(&block.ff_out.value)?;
        add_bias(&mut ff_out, &block.ff_out_bias.value)?;
        let ff_dropout = if use_dropout {
            Some(dropout_mask(ff_out.len(), self.config.dropout_rate, rng.as_deref_mut().expect("dropout rng")))
        } else {
            None
        };
        apply_mask(&mut ff_out, &ff_dropout);
        let y = mid.add(&ff_out)?;

        let cache = BlockCache {
            norm1,
            normed1,
            query,
            key,
            value,
            context,
            attn_dropout,
            norm2,
            normed2,
            ff_pre,
            ff_act,
            ff_dropout,
        };
        Ok((y, probs, cache))
    }

    /// Accumulates parameter gradients for the given head gradients and
    /// returns `dL/dH⁽⁰⁾` (after embedding dropout).
    pub fn backward(&mut self, trace: &ForwardTrace<T>, grads: &HeadGradients<T>) -> Result<Matrix<T>> {
        let n = trace.output.rows();
        let d = self.config.d_model;
        let mut d_out = Matrix::zeros(n, d);

        if let Some(dlog) = &grads.rationale {
            check_shape(dlog, n, self.config.n_rationale_classes, "rationale gradient")?;
            let head = &mut self.rationale_head;
            let act = &trace.cache.rationale_act;
            head.out.grad.add_assign(&act.transposed_matmul(dlog)?)?;
            head.out_bias.grad.add_assign(&dlog.sum_rows())?;
            let d_act = dlog.matmul_transposed(&head.out.value)?;
            let mut d_pre = d_act;
            for (g, &z) in d_pre.data_mut().iter_mut().zip(trace.cache.rationale_pre.data()) {
                *g *= gelu_grad(z);
            }
            head.hidden.grad.add_assign(&trace.output.transposed_matmul(&d_pre)?)?;
            head.hidden_bias.grad.add_assign(&d_pre.sum_rows())?;
            d_out.add_assign(&d_pre.matmul_transposed(&head.hidden.value)?)?;
        }

        if let Some(dlog) = &grads.class {
            check_shape(dlog, 1, self.config.n_classes, "class gradient")?;
            let cls = trace.output.slice_rows(0, 1);
            self.class_head.weight.grad.add_assign(&cls.transposed_matmul(dlog)?)?;
            self.class_head.bias.grad.add_assign(dlog)?;
            let d_cls = dlog.matmul_transposed(&self.class_head.weight.value)?;
            for (o, &g) in d_out.row_mut(0).iter_mut().zip(d_cls.data()) {
                *o += g;
            }
        }

        if let Some(dlog) = &grads.vocab {
            let head = self
                .vocab_head
                .as_mut()
                .ok_or_else(|| Error::input("vocab gradient without a vocabulary head"))?;
            check_shape(dlog, n, self.config.vocab_size, "vocab gradient")?;
            head.weight.grad.add_assign(&trace.output.transposed_matmul(dlog)?)?;
            head.bias.grad.add_assign(&dlog.sum_rows())?;
            d_out.add_assign(&dlog.matmul_transposed(&head.weight.value)?)?;
        }

        let mut dh = {
            let gain = self.final_norm_gain.value.data().to_vec();
            let mut dgain = vec![T::zero(); d];
            let mut dbias = vec![T::zero(); d];
            let dx = layer_norm_rows_backward(&d_out, &gain, &trace.cache.final_norm, &mut dgain, &mut dbias);
            accumulate(&mut self.final_norm_gain.grad, &dgain);
            accumulate(&mut self.final_norm_bias.grad, &dbias);
            dx
        };

        for l in (0..self.blocks.len()).rev() {
            let cache = &trace.cache.blocks[l];
            dh = block_backward(&mut self.blocks[l], cache, &trace.attention[l], &dh, &self.config, trace.real_len)?;
        }
        apply_mask(&mut dh, &trace.cache.embed_dropout);
        dh.ensure_finite("embedding gradient")?;
        Ok(dh)
    }

    /// Adds `dL/dH⁽⁰⁾` into the token, position and rationale tables.
    pub fn backward_embeddings(&mut self, input: &EncoderInput<'_>, d_h0: &Matrix<T>) -> Result<()> {
        self.check_input(input.token_ids, input.real_len, input.rationales)?;
        check_shape(d_h0, input.token_ids.len(), self.config.d_model, "embedding gradient")?;
        for (i, &id) in input.token_ids.iter().enumerate() {
            let g = d_h0.row(i);
            add_row(self.token_embedding.grad.row_mut(id as usize), g);
            add_row(self.position_embedding.grad.row_mut(i), g);
            if let Some(bit) = observed_bit(input.rationales, i, input.real_len) {
                add_row(self.rationale_embedding.grad.row_mut(usize::from(bit)), g);
            }
        }
        Ok(())
    }

    /// Full backward through heads, blocks and embedding tables.
    pub fn backward_all(
        &mut self,
        input: &EncoderInput<'_>,
        trace: &ForwardTrace<T>,
        grads: &HeadGradients<T>,
    ) -> Result<()> {
        let d_h0 = self.backward(trace, grads)?;
        self.backward_embeddings(input, &d_h0)
    }
}

fn check_shape<T: Scalar>(m: &Matrix<T>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn add_row<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn accumulate<T: Scalar>(grad: &mut Matrix<T>, values: &[T]) {
    add_row(grad.data_mut(), values);
}

fn block_backward<T: Scalar>(
    block: &mut Block<T>,
    cache: &BlockCache<T>,
    probs: &[Matrix<T>],
    dy: &Matrix<T>,
    config: &super::ModelConfig,
    real_len: usize,
) -> Result<Matrix<T>> {
    let n = dy.rows();
    let d = config.d_model;
    let dh = config.head_dim();
    let scale = T::one() / T::lit(dh as f64).sqrt();

    // y = mid + dropout(ff(norm2(mid)))
    let mut d_ff_out = dy.clone();
    apply_mask(&mut d_ff_out, &cache.ff_dropout);
    block.ff_out.grad.add_assign(&cache.ff_act.transposed_matmul(&d_ff_out)?)?;
    block.ff_out_bias.grad.add_assign(&d_ff_out.sum_rows())?;
    let mut d_ff_pre = d_ff_out.matmul_transposed(&block.ff_out.value)?;
    for (g, &z) in d_ff_pre.data_mut().iter_mut().zip(cache.ff_pre.data()) {
        *g *= gelu_grad(z);
    }
    block.ff_in.grad.add_assign(&cache.normed2.transposed_matmul(&d_ff_pre)?)?;
    block.ff_in_bias.grad.add_assign(&d_ff_pre.sum_rows())?;
    let d_normed2 = d_ff_pre.matmul_transposed(&block.ff_in.value)?;
    let mut dgain = vec![T::zero(); d];
    let mut dbias = vec![T::zero(); d];
    let gain2 = block.norm2_gain.value.data().to_vec();
    let d_mid_norm = layer_norm_rows_backward(&d_normed2, &gain2, &cache.norm2, &mut dgain, &mut dbias);
    accumulate(&mut block.norm2_gain.grad, &dgain);
    accumulate(&mut block.norm2_bias.grad, &dbias);
    let mut d_mid = dy.add(&d_mid_norm)?;

    // mid = x + dropout(attn(norm1(x)))
    let mut d_attn_out = d_mid.clone();
    apply_mask(&mut d_attn_out, &cache.attn_dropout);
    block.output.grad.add_assign(&cache.context.transposed_matmul(&d_attn_out)?)?;
    block.output_bias.grad.add_assign(&d_attn_out.sum_rows())?;
    let d_context = d_attn_out.matmul_transposed(&block.output.value)?;

    let mut d_query = Matrix::zeros(n, d);
    let mut d_key = Matrix::zeros(n, d);
    let mut d_value = Matrix::zeros(n, d);
    let mut dp = vec![T::zero(); n];
    let mut ds = vec![T::zero(); n];
    for (h, p) in probs.iter().enumerate() {
        let off = h * dh;
        for i in 0..n {
            let dc = &d_context.row(i)[off..off + dh];
            for j in 0..n {
                if j >= real_len {
                    dp[j] = T::zero();
                    continue;
                }
                let v = &cache.value.row(j)[off..off + dh];
                let mut s = T::zero();
                for c in 0..dh {
                    s += dc[c] * v[c];
                }
                dp[j] = s;
                let w = p.get(i, j);
                let dv = &mut d_value.row_mut(j)[off..off + dh];
                for c in 0..dh {
                    dv[c] += w * dc[c];
                }
            }
            softmax_backward_row(p.row(i), &dp, &mut ds);
            for j in 0..real_len {
                let g = ds[j] * scale;
                if g == T::zero() {
                    continue;
                }
                let k = &cache.key.row(j)[off..off + dh];
                let q = &cache.query.row(i)[off..off + dh];
                {
                    let dq = &mut d_query.row_mut(i)[off..off + dh];
                    for c in 0..dh {
                        dq[c] += g * k[c];
                    }
                }
                let dk = &mut d_key.row_mut(j)[off..off + dh];
                for c in 0..dh {
                    dk[c] += g * q[c];
                }
            }
        }
    }

    block.query.grad.add_assign(&cache.normed1.transposed_matmul(&d_query)?)?;
    block.query_bias.grad.add_assign(&d_query.sum_rows())?;
    block.key.grad.add_assign(&cache.normed1.transposed_matmul(&d_key)?)?;
    block.key_bias.grad.add_assign(&d_key.sum_rows())?;
    block.value.grad.add_assign(&cache.normed1.transposed_matmul(&d_value)?)?;
    block.value_bias.grad.add_assign(&d_value.sum_rows())?;
    let mut d_normed1 = d_query.matmul_transposed(&block.query.value)?;
    d_normed1.add_assign(&d_key.matmul_transposed(&block.key.value)?)?;
    d_normed1.add_assign(&d_value.matmul_transposed(&block.value.value)?)?;

    let gain1 = block.norm1_gain.value.data().to_vec();
    let mut dgain = vec![T::zero(); d];
    let mut dbias = vec![T::zero(); d];
    let dx_norm = layer_norm_rows_backward(&d_normed1, &gain1, &cache.norm1, &mut dgain, &mut dbias);
    accumulate(&mut block.norm1_gain.grad, &dgain);
    accumulate(&mut block.norm1_bias.grad, &dbias);
    d_mid.add_assign(&dx_norm)?;
    Ok(d_mid)
}
