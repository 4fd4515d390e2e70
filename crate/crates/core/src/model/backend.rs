//! Masked-language-model encoders.

use rand::Rng;

use super::{init_matrix, ones_row, zeros_row, ModelConfig};
use crate::autograd::{ParamId, ParamStore, Tape, Var};
use crate::tokenizer::TokenId;

/// A bidirectional encoder with an MLM output head whose decoder weight is the
/// input token embedding table.
pub trait EncoderBackend {
    fn hidden_size(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn max_len(&self) -> usize;

    /// Encodes each sequence and stacks the hidden states of all positions,
    /// sequence after sequence (`Σ len × d`).
    fn encode(&self, tape: &mut Tape, seqs: &[&[TokenId]]) -> Var;

    /// The `V × d` token embedding table, also the MLM decoder weight.
    fn token_embedding(&self) -> ParamId;

    /// The `1 × V` MLM decoder bias.
    fn mlm_bias(&self) -> ParamId;

    /// Vocabulary logits for the given stacked hidden rows.
    fn mlm_logits(&self, tape: &mut Tape, hidden: Var) -> Var;
}

/// Dense layer `x · W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            weight: store.add(
                format!("{name}.weight"),
                init_matrix(inputs, outputs, std, rng),
            ),
            bias: store.add(format!("{name}.bias"), zeros_row(outputs)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), ones_row(dim)),
            bias: store.add(format!("{name}.bias"), zeros_row(dim)),
            eps,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, self.eps)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attn_norm: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    ffn_norm: LayerNorm,
}

/// BERT-style post-norm transformer trained from scratch.
#[derive(Debug, Clone)]
pub struct TransformerBackend {
    hidden: usize,
    heads: usize,
    vocab_size: usize,
    max_len: usize,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embed_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
    mlm_transform: Linear,
    mlm_norm: LayerNorm,
    mlm_bias: ParamId,
}

impl TransformerBackend {
    pub fn new(config: &ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let d = config.hidden;
        let std = config.init_std;
        let eps = config.ln_eps;
        let token_embedding = store.add(
            "embeddings.token",
            init_matrix(config.vocab_size, d, std, rng),
        );
        let position_embedding = store.add(
            "embeddings.position",
            init_matrix(config.max_len, d, std, rng),
        );
        let embed_norm = LayerNorm::new(store, "embeddings.norm", d, eps);
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncoderLayer {
                    query: Linear::new(store, &format!("{p}.attn.query"), d, d, std, rng),
                    key: Linear::new(store, &format!("{p}.attn.key"), d, d, std, rng),
                    value: Linear::new(store, &format!("{p}.attn.value"), d, d, std, rng),
                    output: Linear::new(store, &format!("{p}.attn.output"), d, d, std, rng),
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn.norm"), d, eps),
                    ffn_in: Linear::new(store, &format!("{p}.ffn.in"), d, config.ffn, std, rng),
                    ffn_out: Linear::new(store, &format!("{p}.ffn.out"), config.ffn, d, std, rng),
                    ffn_norm: LayerNorm::new(store, &format!("{p}.ffn.norm"), d, eps),
                }
            })
            .collect();
        let mlm_transform = Linear::new(store, "mlm.transform", d, d, std, rng);
        let mlm_norm = LayerNorm::new(store, "mlm.norm", d, eps);
        let mlm_bias = store.add("mlm.decoder.bias", zeros_row(config.vocab_size));
        Self {
            hidden: d,
            heads: config.heads,
            vocab_size: config.vocab_size,
            max_len: config.max_len,
            token_embedding,
            position_embedding,
            embed_norm,
            layers,
            mlm_transform,
            mlm_norm,
            mlm_bias,
        }
    }

    fn self_attention(&self, tape: &mut Tape, layer: &EncoderLayer, x: Var, lens: &[usize]) -> Var {
        let q = layer.query.forward(tape, x);
        let k = layer.key.forward(tape, x);
        let v = layer.value.forward(tape, x);
        let dh = self.hidden / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut per_seq = Vec::with_capacity(lens.len());
        let mut offset = 0;
        for &len in lens {
            let qs = tape.slice_rows(q, offset, len);
            let ks = tape.slice_rows(k, offset, len);
            let vs = tape.slice_rows(v, offset, len);
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = tape.slice_cols(qs, h * dh, dh);
                let kh = tape.slice_cols(ks, h * dh, dh);
                let vh = tape.slice_cols(vs, h * dh, dh);
                let logits = tape.matmul_bt(qh, kh);
                let logits = tape.scale(logits, scale);
                let att = tape.softmax(logits, None);
                heads.push(tape.matmul(att, vh));
            }
            per_seq.push(tape.concat_cols(heads));
            offset += len;
        }
        let ctx = tape.concat_rows(per_seq);
        layer.output.forward(tape, ctx)
    }
}

impl EncoderBackend for TransformerBackend {
    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn encode(&self, tape: &mut Tape, seqs: &[&[TokenId]]) -> Var {
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        assert!(
            lens.iter().all(|&l| l > 0 && l <= self.max_len),
            "sequence lengths {lens:?} outside 1..={}",
            self.max_len
        );
        let token_rows: Vec<usize> = seqs
            .iter()
            .flat_map(|s| s.iter().map(|&t| t as usize))
            .collect();
        let pos_rows: Vec<usize> = lens.iter().flat_map(|&l| 0..l).collect();
        let emb = tape.param(self.token_embedding);
        let pos = tape.param(self.position_embedding);
        let tok = tape.gather(emb, token_rows);
        let pos = tape.gather(pos, pos_rows);
        let x = tape.add(tok, pos);
        let mut x = self.embed_norm.forward(tape, x);
        for layer in &self.layers {
            let a = self.self_attention(tape, layer, x, &lens);
            let r = tape.add(x, a);
            x = layer.attn_norm.forward(tape, r);
            let f = layer.ffn_in.forward(tape, x);
            let f = tape.gelu(f);
            let f = layer.ffn_out.forward(tape, f);
            let r = tape.add(x, f);
            x = layer.ffn_norm.forward(tape, r);
        }
        x
    }

    fn token_embedding(&self) -> ParamId {
        self.token_embedding
    }

    fn mlm_bias(&self) -> ParamId {
        self.mlm_bias
    }

    fn mlm_logits(&self, tape: &mut Tape, hidden: Var) -> Var {
        let t = self.mlm_transform.forward(tape, hidden);
        let t = tape.gelu(t);
        let t = self.mlm_norm.forward(tape, t);
        let emb = tape.param(self.token_embedding);
        let logits = tape.matmul_bt(t, emb);
        let bias = tape.param(self.mlm_bias);
        tape.add_row(logits, bias)
    }
}
