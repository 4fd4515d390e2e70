//! Vocabularies, tokenizers and padded type-phrase batches.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Reserved tokens of a built vocabulary, in id order.
pub const SPECIAL_TOKENS: [&str; 7] = ["[PAD]", "[UNK]", "[MASK]", "[BOS]", "[EOS]", "[", "]"];

/// Words the input templates need besides the specials.
pub const TEMPLATE_WORDS: [&str; 6] = ["(", ")", ":", "type", "left", "right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub pad: TokenId,
    pub unk: TokenId,
    pub mask: TokenId,
    pub bos: TokenId,
    pub eos: TokenId,
    pub lbracket: TokenId,
    pub rbracket: TokenId,
}

impl SpecialIds {
    pub fn all(&self) -> [TokenId; 7] {
        [
            self.pad,
            self.unk,
            self.mask,
            self.bos,
            self.eos,
            self.lbracket,
            self.rbracket,
        ]
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.all().contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialIds,
}

impl Vocabulary {
    /// Builds a vocabulary whose first seven entries are [`SPECIAL_TOKENS`].
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens[..SPECIAL_TOKENS.len()]
                .iter()
                .zip(SPECIAL_TOKENS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::Config(format!(
                "vocabulary must start with {SPECIAL_TOKENS:?}"
            )));
        }
        let special = SpecialIds {
            pad: 0,
            unk: 1,
            mask: 2,
            bos: 3,
            eos: 4,
            lbracket: 5,
            rbracket: 6,
        };
        Self::with_special(tokens, special)
    }

    fn with_special(tokens: Vec<String>, special: SpecialIds) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let ids = special.all();
        for (i, a) in ids.iter().enumerate() {
            if *a as usize >= tokens.len() || ids[i + 1..].contains(a) {
                return Err(Error::Config(
                    "special token ids must be distinct and in range".into(),
                ));
            }
        }
        Ok(Self {
            tokens,
            index,
            special,
        })
    }

    /// Reads a BERT-style `vocab.txt` (`[PAD]`, `[UNK]`, `[MASK]`, `[CLS]`, `[SEP]`).
    pub fn from_bert_lines(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(|l| l.trim_end().to_owned()).collect();
        let find = |name: &str| -> Result<TokenId> {
            tokens
                .iter()
                .position(|t| t == name)
                .map(|i| i as TokenId)
                .ok_or_else(|| Error::Config(format!("vocabulary lacks {name}")))
        };
        let special = SpecialIds {
            pad: find("[PAD]")?,
            unk: find("[UNK]")?,
            mask: find("[MASK]")?,
            bos: find("[CLS]")?,
            eos: find("[SEP]")?,
            lbracket: find("[")?,
            rbracket: find("]")?,
        };
        Self::with_special(tokens, special)
    }

    /// One token per line; the line number is the id.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn special(&self) -> &SpecialIds {
        &self.special
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or("[UNK]")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Counts lowercased whitespace tokens; ids are assigned by (frequency desc, token).
#[derive(Debug, Default, Clone)]
pub struct VocabBuilder {
    counts: BTreeMap<String, usize>,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_text(&mut self, text: &str) -> &mut Self {
        for w in text.split_whitespace() {
            *self.counts.entry(w.to_lowercase()).or_insert(0) += 1;
        }
        self
    }

    pub fn add_words<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) -> &mut Self {
        for w in words {
            self.add_text(w);
        }
        self
    }

    /// Adds the context and mention words of one example.
    pub fn add_example(&mut self, ex: &crate::corpus::MentionExample) -> &mut Self {
        self.add_words(ex.left_context.iter().map(String::as_str));
        self.add_text(&ex.mention);
        self.add_words(ex.right_context.iter().map(String::as_str))
    }

    pub fn build(&self) -> Vocabulary {
        let mut counts = self.counts.clone();
        for w in TEMPLATE_WORDS {
            counts.entry(w.to_owned()).or_insert(0);
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Vocabulary::from_tokens(tokens).expect("builder output satisfies vocabulary invariants")
    }
}

pub trait Tokenizer: Send + Sync {
    fn vocab(&self) -> &Vocabulary;
    fn tokenize(&self, text: &str) -> Vec<TokenId>;
    fn detokenize(&self, ids: &[TokenId]) -> String;
}

/// Lowercased whitespace word tokenizer over a corpus-built vocabulary.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    vocab: Vocabulary,
}

impl WordTokenizer {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }
}

impl Tokenizer for WordTokenizer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| {
                self.vocab
                    .id(&w.to_lowercase())
                    .unwrap_or(self.vocab.special.unk)
            })
            .collect()
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.vocab.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Greedy longest-match-first WordPiece over an external BERT vocabulary.
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: Vocabulary,
    lowercase: bool,
}

impl WordPieceTokenizer {
    const MAX_WORD_CHARS: usize = 100;

    pub fn new(vocab: Vocabulary, lowercase: bool) -> Self {
        Self { vocab, lowercase }
    }

    fn pre_split(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_owned()
        };
        let mut words = Vec::new();
        for chunk in text.split_whitespace() {
            let mut cur = String::new();
            for c in chunk.chars() {
                if c.is_ascii_punctuation() {
                    if !cur.is_empty() {
                        words.push(std::mem::take(&mut cur));
                    }
                    words.push(c.to_string());
                } else {
                    cur.push(c);
                }
            }
            if !cur.is_empty() {
                words.push(cur);
            }
        }
        words
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<TokenId>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > Self::MAX_WORD_CHARS {
            out.push(self.vocab.special.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(id) = self.vocab.id(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.vocab.special.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl Tokenizer for WordPieceTokenizer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for w in self.pre_split(text) {
            self.word_pieces(&w, &mut out);
        }
        out
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut s = String::new();
        for &id in ids {
            let t = self.vocab.token(id);
            match t.strip_prefix("##") {
                Some(rest) => s.push_str(rest),
                None => {
                    if !s.is_empty() {
                        s.push(' ');
                    }
                    s.push_str(t);
                }
            }
        }
        s
    }
}

/// Which tokenizer a checkpoint was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TokenizerKind {
    Word,
    WordPiece { lowercase: bool },
}

/// The provided tokenizers behind one type.
#[derive(Debug, Clone)]
pub enum TextTokenizer {
    Word(WordTokenizer),
    WordPiece(WordPieceTokenizer),
}

impl TextTokenizer {
    pub fn new(kind: TokenizerKind, vocab: Vocabulary) -> Self {
        match kind {
            TokenizerKind::Word => TextTokenizer::Word(WordTokenizer::new(vocab)),
            TokenizerKind::WordPiece { lowercase } => {
                TextTokenizer::WordPiece(WordPieceTokenizer::new(vocab, lowercase))
            }
        }
    }

    /// Parses vocabulary text in the layout `kind` expects.
    pub fn parse(kind: TokenizerKind, vocab_text: &str) -> Result<Self> {
        let vocab = match kind {
            TokenizerKind::Word => Vocabulary::parse(vocab_text)?,
            TokenizerKind::WordPiece { .. } => Vocabulary::from_bert_lines(vocab_text)?,
        };
        Ok(Self::new(kind, vocab))
    }

    pub fn kind(&self) -> TokenizerKind {
        match self {
            TextTokenizer::Word(_) => TokenizerKind::Word,
            TextTokenizer::WordPiece(w) => TokenizerKind::WordPiece {
                lowercase: w.lowercase,
            },
        }
    }
}

impl Tokenizer for TextTokenizer {
    fn vocab(&self) -> &Vocabulary {
        match self {
            TextTokenizer::Word(t) => t.vocab(),
            TextTokenizer::WordPiece(t) => t.vocab(),
        }
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        match self {
            TextTokenizer::Word(t) => t.tokenize(text),
            TextTokenizer::WordPiece(t) => t.tokenize(text),
        }
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        match self {
            TextTokenizer::Word(t) => t.detokenize(ids),
            TextTokenizer::WordPiece(t) => t.detokenize(ids),
        }
    }
}

/// Type phrases tokenized and right-padded to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeTokenBatch {
    /// `|types| × n`, padded positions hold the PAD id.
    pub ids: Array2<TokenId>,
    /// `true` marks a real token.
    pub valid_mask: Array2<bool>,
    pub types: Vec<String>,
}

impl TypeTokenBatch {
    pub fn len(&self) -> usize {
        self.ids.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.ids.ncols()
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.valid_mask
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|v| **v).count())
            .collect()
    }

    /// Re-pads to `width` (≥ the current width).
    pub fn padded_to(&self, width: usize, pad: TokenId) -> Self {
        assert!(width >= self.width(), "cannot shrink a type batch");
        let rows = self.len();
        let mut ids = Array2::from_elem((rows, width), pad);
        let mut mask = Array2::from_elem((rows, width), false);
        ids.slice_mut(ndarray::s![.., ..self.width()])
            .assign(&self.ids);
        mask.slice_mut(ndarray::s![.., ..self.width()])
            .assign(&self.valid_mask);
        Self {
            ids,
            valid_mask: mask,
            types: self.types.clone(),
        }
    }
}

pub fn pad_type_batch<T: Tokenizer + ?Sized>(
    tokenizer: &T,
    phrases: &[String],
) -> Result<TypeTokenBatch> {
    if phrases.is_empty() {
        return Err(Error::Input("type batch needs at least one phrase".into()));
    }
    let seqs = phrases
        .iter()
        .map(|p| {
            let ids = tokenizer.tokenize(p);
            if ids.is_empty() {
                Err(Error::Input(format!("type phrase {p:?} has no tokens")))
            } else {
                Ok(ids)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let pad = tokenizer.vocab().special().pad;
    let mut ids = Array2::from_elem((seqs.len(), n), pad);
    let mut valid_mask = Array2::from_elem((seqs.len(), n), false);
    for (r, seq) in seqs.iter().enumerate() {
        for (c, &id) in seq.iter().enumerate() {
            ids[[r, c]] = id;
            valid_mask[[r, c]] = true;
        }
    }
    Ok(TypeTokenBatch {
        ids,
        valid_mask,
        types: phrases.to_vec(),
    })
}
