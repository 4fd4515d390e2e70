//! Model-input sequences for entity typing, neighbor-word prediction and MLM.
//!
//! Typing input:   `<bos> lcxt [ mention ] ( type : [MASK] ) rcxt <eos>`
//! Neighbor input: `<bos> lcxt [ mention ] ( left|right : [MASK] ) rcxt <eos>`

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::MentionExample;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenRole {
    Special,
    Context,
    Bracket,
    Mention,
    Template,
    Slot,
}

impl TokenRole {
    /// Roles the MLM corruption may select.
    pub fn maskable(self) -> bool {
        matches!(self, TokenRole::Context | TokenRole::Mention)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub ids: Vec<TokenId>,
    pub roles: Vec<TokenRole>,
    pub slot_index: usize,
    /// Half-open token range of the mention inside the brackets.
    pub mention_span: (usize, usize),
    /// Corrupted position → original token id.
    pub mlm_targets: BTreeMap<usize, TokenId>,
}

impl ModelInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn eligible_positions(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| r.maskable())
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Builds inputs against one tokenizer and maximum length.
pub struct SequenceBuilder<'a> {
    tokenizer: &'a dyn Tokenizer,
    max_len: usize,
    type_prefix: Vec<TokenId>,
    left_prefix: Vec<TokenId>,
    right_prefix: Vec<TokenId>,
    close: Vec<TokenId>,
}

impl<'a> SequenceBuilder<'a> {
    pub fn new(tokenizer: &'a dyn Tokenizer, max_len: usize) -> Self {
        Self {
            tokenizer,
            max_len,
            type_prefix: tokenizer.tokenize("( Type :"),
            left_prefix: tokenizer.tokenize("( Left :"),
            right_prefix: tokenizer.tokenize("( Right :"),
            close: tokenizer.tokenize(")"),
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer
    }

    pub fn build_et_input(&self, ex: &MentionExample) -> Result<ModelInput> {
        self.build(ex, &self.type_prefix)
    }

    /// The neighbor-word input and its target: the first token of the last
    /// left word or the first right word. `None` when that side is empty.
    pub fn build_nwp_input(
        &self,
        ex: &MentionExample,
        side: Side,
    ) -> Result<Option<(ModelInput, TokenId)>> {
        let word = match side {
            Side::Left => ex.left_context.last(),
            Side::Right => ex.right_context.first(),
        };
        let Some(target) = word.and_then(|w| self.tokenizer.tokenize(w).first().copied()) else {
            return Ok(None);
        };
        let prefix = match side {
            Side::Left => &self.left_prefix,
            Side::Right => &self.right_prefix,
        };
        let input = self.build(ex, prefix)?;
        Ok(Some((input, target)))
    }

    fn build(&self, ex: &MentionExample, prefix: &[TokenId]) -> Result<ModelInput> {
        let sp = *self.tokenizer.vocab().special();
        let mention = self.tokenizer.tokenize(&ex.mention);
        if mention.is_empty() {
            return Err(Error::Input(format!(
                "mention {:?} has no tokens",
                ex.mention
            )));
        }
        let mut left = self.tokenize_words(&ex.left_context);
        let mut right = self.tokenize_words(&ex.right_context);

        let fixed = 2 + 2 + mention.len() + prefix.len() + 1 + self.close.len();
        if fixed > self.max_len {
            return Err(Error::Input(format!(
                "mention {:?} needs {fixed} tokens with the template, max length is {}",
                ex.mention, self.max_len
            )));
        }
        let budget = self.max_len - fixed;
        // Drop the context token farthest from the mention until it fits.
        let (mut l0, mut r1) = (0, right.len());
        while (left.len() - l0) + r1 > budget {
            if left.len() - l0 > r1 {
                l0 += 1;
            } else {
                r1 -= 1;
            }
        }
        left.drain(..l0);
        right.truncate(r1);

        let mut ids = Vec::with_capacity(fixed + left.len() + right.len());
        let mut roles = Vec::with_capacity(ids.capacity());
        let mut push = |id: TokenId, role: TokenRole| {
            ids.push(id);
            roles.push(role);
        };
        push(sp.bos, TokenRole::Special);
        left.iter().for_each(|&t| push(t, TokenRole::Context));
        push(sp.lbracket, TokenRole::Bracket);
        let m0 = 2 + left.len();
        mention.iter().for_each(|&t| push(t, TokenRole::Mention));
        push(sp.rbracket, TokenRole::Bracket);
        prefix.iter().for_each(|&t| push(t, TokenRole::Template));
        push(sp.mask, TokenRole::Slot);
        self.close
            .iter()
            .for_each(|&t| push(t, TokenRole::Template));
        right.iter().for_each(|&t| push(t, TokenRole::Context));
        push(sp.eos, TokenRole::Special);

        let slot_index = m0 + mention.len() + 1 + prefix.len();
        Ok(ModelInput {
            ids,
            roles,
            slot_index,
            mention_span: (m0, m0 + mention.len()),
            mlm_targets: BTreeMap::new(),
        })
    }

    fn tokenize_words(&self, words: &[String]) -> Vec<TokenId> {
        words
            .iter()
            .flat_map(|w| self.tokenizer.tokenize(w))
            .collect()
    }
}

/// Number of positions selected for corruption: `⌈rate · eligible⌉`.
pub fn mlm_count(rate: f64, eligible: usize) -> usize {
    // The epsilon keeps exact products such as 0.15 · 20 from rounding up.
    let raw = rate * eligible as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(eligible)
}

/// BERT-style corruption: of the selected positions 80% become [MASK], 10% a
/// random non-special token and 10% stay unchanged. The type slot, brackets,
/// template and special tokens are never selected.
pub fn apply_mlm_corruption(
    input: &ModelInput,
    rate: f64,
    seed: u64,
    tokenizer: &dyn Tokenizer,
) -> ModelInput {
    let mut out = input.clone();
    out.mlm_targets.clear();
    let mut eligible = input.eligible_positions();
    let count = mlm_count(rate, eligible.len());
    if count == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut chosen = eligible[..count].to_vec();
    chosen.sort_unstable();

    let vocab = tokenizer.vocab();
    let sp = vocab.special();
    let vocab_len = vocab.len() as TokenId;
    for pos in chosen {
        out.mlm_targets.insert(pos, input.ids[pos]);
        let r: f64 = rng.gen();
        if r < 0.8 {
            out.ids[pos] = sp.mask;
        } else if r < 0.9 {
            let mut id = rng.gen_range(0..vocab_len);
            while sp.contains(id) {
                id = rng.gen_range(0..vocab_len);
            }
            out.ids[pos] = id;
        }
    }
    out
}
