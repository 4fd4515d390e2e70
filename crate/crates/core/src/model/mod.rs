//! The entity typing model.
//!
//! `s(x, t) = h_x · g_t` where `h_x` comes from the type-slot hidden state of
//! the encoder and `g_t` from attention pooling over the type phrase's token
//! embeddings. The same embedding table feeds the encoder input, the type
//! encoder and the MLM decoder.

mod backend;
mod heads;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use backend::{EncoderBackend, LayerNorm, Linear, TransformerBackend};
pub use heads::{Activation, AttentionScale, MentionHead, NeighborHead, ScoreMatrix, TypeEncoder};

use crate::autograd::{Mat, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::sequence::ModelInput;
use crate::tokenizer::TypeTokenBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Encoder self-attention heads.
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    /// Type-pooling heads `H`.
    pub type_heads: usize,
    pub type_scale: AttentionScale,
    pub mention_activation: Activation,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 4 layers, d = 128, 4 heads, max length 128.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden: 128,
            layers: 4,
            heads: 4,
            ffn: 512,
            max_len: 128,
            type_heads: 4,
            type_scale: AttentionScale::Hidden,
            mention_activation: Activation::Gelu,
            init_std: 0.02,
            ln_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.hidden == 0 || self.max_len == 0 || self.ffn == 0 {
            return bad("model sizes must be positive".into());
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "encoder heads {} must divide hidden {}",
                self.heads, self.hidden
            ));
        }
        if self.type_heads == 0 || !self.hidden.is_multiple_of(self.type_heads) {
            return bad(format!(
                "type heads {} must divide hidden {}",
                self.type_heads, self.hidden
            ));
        }
        if !(self.init_std > 0.0) || !(self.ln_eps > 0.0) {
            return bad("init_std and ln_eps must be positive".into());
        }
        Ok(())
    }
}

pub(crate) fn init_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Mat {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

pub(crate) fn zeros_row(n: usize) -> Mat {
    Mat::zeros((1, n))
}

pub(crate) fn ones_row(n: usize) -> Mat {
    Mat::ones((1, n))
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `B × |types|` scores.
    pub scores: Var,
    /// `B × d` mention representations.
    pub mentions: Var,
    /// `|types| × d` type representations.
    pub types: Var,
    /// Stacked encoder hidden states of all inputs.
    pub hidden: Var,
    /// Row offset of each input inside `hidden`.
    pub offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TypingModel {
    config: ModelConfig,
    params: ParamStore,
    backend: TransformerBackend,
    mention: MentionHead,
    types: TypeEncoder,
    neighbor: NeighborHead,
}

impl TypingModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let backend = TransformerBackend::new(&config, &mut params, &mut rng);
        let mention = MentionHead::new(&config, &mut params, &mut rng);
        let types = TypeEncoder::new(&config, backend.token_embedding(), &mut params, &mut rng);
        let neighbor = NeighborHead::new(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            backend,
            mention,
            types,
            neighbor,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn backend(&self) -> &TransformerBackend {
        &self.backend
    }

    pub fn mention_head(&self) -> &MentionHead {
        &self.mention
    }

    pub fn type_encoder(&self) -> &TypeEncoder {
        &self.types
    }

    pub fn neighbor_head(&self) -> &NeighborHead {
        &self.neighbor
    }

    /// The table type tokens are embedded with.
    pub fn type_embedding_table(&self) -> &Mat {
        self.params.get(self.types.embedding)
    }

    /// The decoder weight of the MLM head.
    pub fn mlm_head_weight(&self) -> &Mat {
        self.params.get(self.backend.token_embedding())
    }

    pub fn mlm_head_weight_id(&self) -> ParamId {
        self.backend.token_embedding()
    }

    /// Records a full forward pass of `inputs` against `types` on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        inputs: &[&ModelInput],
        types: &TypeTokenBatch,
    ) -> Forward {
        self.forward_multi(tape, inputs, &[], types)
    }

    /// Like [`TypingModel::forward`], but also encodes `aux` inputs in the same
    /// encoder pass. Only `inputs` are scored; `offsets` covers both, `aux` last.
    pub fn forward_multi(
        &self,
        tape: &mut Tape,
        inputs: &[&ModelInput],
        aux: &[&ModelInput],
        types: &TypeTokenBatch,
    ) -> Forward {
        let seqs: Vec<&[u32]> = inputs.iter().chain(aux).map(|i| i.ids.as_slice()).collect();
        let hidden = self.backend.encode(tape, &seqs);
        let mut offsets = Vec::with_capacity(seqs.len());
        let mut at = 0;
        for s in &seqs {
            offsets.push(at);
            at += s.len();
        }
        let slots: Vec<usize> = inputs
            .iter()
            .zip(&offsets)
            .map(|(inp, off)| off + inp.slot_index)
            .collect();
        let slot_hidden = tape.gather(hidden, slots);
        let mentions = self.mention.forward(tape, slot_hidden);
        let type_repr = self.types.forward(tape, types);
        let scores = tape.matmul_bt(mentions, type_repr);
        Forward {
            scores,
            mentions,
            types: type_repr,
            hidden,
            offsets,
        }
    }

    /// Scores without keeping the tape.
    pub fn score(&self, inputs: &[&ModelInput], types: &TypeTokenBatch) -> ScoreMatrix {
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, inputs, types);
        ScoreMatrix {
            scores: tape.value(f.scores).clone(),
        }
    }

    /// `h_x` for one input.
    pub fn encode_mention(&self, input: &ModelInput) -> Result<Array1<f64>> {
        if input.slot_index >= input.len() {
            return Err(Error::Input(format!(
                "slot index {} outside sequence of length {}",
                input.slot_index,
                input.len()
            )));
        }
        let mut tape = Tape::new(&self.params);
        let hidden = self.backend.encode(&mut tape, &[input.ids.as_slice()]);
        let slot = tape.gather(hidden, vec![input.slot_index]);
        let h = self.mention.forward(&mut tape, slot);
        Ok(tape.value(h).row(0).to_owned())
    }

    /// `g_t` for every row of `batch`.
    pub fn encode_type_batch(&self, batch: &TypeTokenBatch) -> Array2<f64> {
        let mut tape = Tape::new(&self.params);
        let g = self.types.forward(&mut tape, batch);
        tape.value(g).clone()
    }

    /// Overwrites every parameter from `source`; names and shapes must match exactly.
    pub fn load_params(&mut self, source: &ParamStore) -> Result<()> {
        let mut problems = Vec::new();
        for (_, name, value) in self.params.iter() {
            match source.by_name(name) {
                None => problems.push(format!("{name}: missing")),
                Some(v) if v.dim() != value.dim() => problems.push(format!(
                    "{name}: shape {:?} != expected {:?}",
                    v.dim(),
                    value.dim()
                )),
                Some(_) => {}
            }
        }
        for name in source.names() {
            if self.params.id(name).is_none() {
                problems.push(format!("{name}: unexpected"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Incompatible(problems.join("; ")));
        }
        for i in 0..self.params.len() {
            let id = ParamId(i);
            let name = self.params.name(id).to_owned();
            let v = source.by_name(&name).expect("checked above").clone();
            *self.params.get_mut(id) = v;
        }
        Ok(())
    }
}

/// `h · Gᵀ` on plain matrices.
pub fn score(h: &Array2<f64>, g: &Array2<f64>) -> Result<ScoreMatrix> {
    if h.ncols() != g.ncols() {
        return Err(Error::Input(format!(
            "dimension mismatch: mentions have {} columns, types {}",
            h.ncols(),
            g.ncols()
        )));
    }
    Ok(ScoreMatrix {
        scores: h.dot(&g.t()),
    })
}
