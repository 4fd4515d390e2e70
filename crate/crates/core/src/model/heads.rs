use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backend::{LayerNorm, Linear};
use super::{init_matrix, ModelConfig};
use crate::autograd::{ParamId, ParamStore, Tape, Var};
use crate::tokenizer::TypeTokenBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Identity,
}

/// `h = LayerNorm(f(h* · W))` applied to the type-slot hidden state.
#[derive(Debug, Clone, Copy)]
pub struct MentionHead {
    pub weight: ParamId,
    pub norm: LayerNorm,
    pub activation: Activation,
}

impl MentionHead {
    pub fn new(config: &ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let d = config.hidden;
        Self {
            weight: store.add("mention.weight", init_matrix(d, d, config.init_std, rng)),
            norm: LayerNorm::new(store, "mention.norm", d, config.ln_eps),
            activation: config.mention_activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, slot_hidden: Var) -> Var {
        let w = tape.param(self.weight);
        let h = tape.matmul(slot_hidden, w);
        let h = match self.activation {
            Activation::Gelu => tape.gelu(h),
            Activation::Identity => h,
        };
        self.norm.forward(tape, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// Divide by `√d`, the full embedding size.
    Hidden,
    /// Divide by `√(d / H)`.
    PerHead,
}

/// Multi-head attention pooling over the tokens of each type phrase.
///
/// Head `i` owns a query vector `q_i` (row `i` of `query`) and the column
/// blocks `i·d_h..(i+1)·d_h` of `key` and `value`. Token embeddings come from
/// the backend's tied table, so type tokens share weights with the MLM head.
#[derive(Debug, Clone, Copy)]
pub struct TypeEncoder {
    pub embedding: ParamId,
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub heads: usize,
    pub hidden: usize,
    pub scale: AttentionScale,
}

impl TypeEncoder {
    pub fn new(
        config: &ModelConfig,
        embedding: ParamId,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let d = config.hidden;
        let h = config.type_heads;
        let std = config.init_std;
        Self {
            embedding,
            query: store.add("type_pool.query", init_matrix(h, d / h, std, rng)),
            key: store.add("type_pool.key", init_matrix(d, d, std, rng)),
            value: store.add("type_pool.value", init_matrix(d, d, std, rng)),
            heads: h,
            hidden: d,
            scale: config.type_scale,
        }
    }

    /// `|types| × d` phrase representations; padded positions get zero weight.
    pub fn forward(&self, tape: &mut Tape, batch: &TypeTokenBatch) -> Var {
        let (t, n) = batch.ids.dim();
        assert!(
            batch.row_lengths().iter().all(|&l| l > 0),
            "every type row needs a real token"
        );
        let rows: Vec<usize> = batch.ids.iter().map(|&id| id as usize).collect();
        let emb = tape.param(self.embedding);
        let x = tape.gather(emb, rows);
        let wk = tape.param(self.key);
        let wv = tape.param(self.value);
        let k = tape.matmul(x, wk);
        let v = tape.matmul(x, wv);
        let q = tape.param(self.query);
        let dh = self.hidden / self.heads;
        let scale = match self.scale {
            AttentionScale::Hidden => 1.0 / (self.hidden as f64).sqrt(),
            AttentionScale::PerHead => 1.0 / (dh as f64).sqrt(),
        };
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let qh = tape.slice_rows(q, h, 1);
            let logits = tape.matmul_bt(kh, qh);
            let logits = tape.reshape(logits, t, n);
            let logits = tape.scale(logits, scale);
            let att = tape.softmax(logits, Some(&batch.valid_mask));
            outs.push(tape.pool_rows(att, vh));
        }
        tape.concat_cols(outs)
    }
}

/// Separate MLM-style head for neighbor-word prediction (untied decoder).
#[derive(Debug, Clone, Copy)]
pub struct NeighborHead {
    pub transform: Linear,
    pub norm: LayerNorm,
    pub decoder: Linear,
}

impl NeighborHead {
    pub fn new(config: &ModelConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let d = config.hidden;
        let std = config.init_std;
        let transform = Linear::new(store, "nwp.transform", d, d, std, rng);
        let norm = LayerNorm::new(store, "nwp.norm", d, config.ln_eps);
        let decoder = Linear::new(store, "nwp.decoder", d, config.vocab_size, std, rng);
        Self {
            transform,
            norm,
            decoder,
        }
    }

    pub fn logits(&self, tape: &mut Tape, hidden: Var) -> Var {
        let t = self.transform.forward(tape, hidden);
        let t = tape.gelu(t);
        let t = self.norm.forward(tape, t);
        self.decoder.forward(tape, t)
    }
}

/// Scores `s(x, t)` and their sigmoid probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Array2<f64>,
}

impl ScoreMatrix {
    pub fn probabilities(&self) -> Array2<f64> {
        self.scores.mapv(crate::autograd::sigmoid)
    }

    pub fn rows(&self) -> usize {
        self.scores.nrows()
    }

    pub fn cols(&self) -> usize {
        self.scores.ncols()
    }
}
