//! Checkpoint directories.
//!
//! ```text
//! manifest.json     parameter name -> shape, dtype, byte offset into params.bin
//! params.bin        little-endian f64 values, concatenated in manifest order
//! config.json       model config, tokenizer kind, schema kind, train config
//! vocab.txt         one token per line, line number = id
//! schema.txt        one label per line
//! mapping.tsv       label <TAB> phrase
//! train_log.jsonl   one step record per line
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TypingModel};
use crate::schema::{build_phrase_table, LabelMapping, SchemaKind, TypeSchema};
use crate::tokenizer::{TextTokenizer, Tokenizer, TokenizerKind, Vocabulary};
use crate::train::{StepRecord, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SCHEMA_FILE: &str = "schema.txt";
pub const MAPPING_FILE: &str = "mapping.tsv";
pub const LOG_FILE: &str = "train_log.jsonl";

const DTYPE: &str = "f64";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps_run: usize,
    pub best_step: Option<usize>,
    pub best_dev_macro_f1: Option<f64>,
    pub stopped_early: bool,
}

/// A model with everything needed to score new examples.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TypingModel,
    pub tokenizer: TextTokenizer,
    pub schema: TypeSchema,
    pub mapping: LabelMapping,
    pub train_config: Option<TrainConfig>,
    pub summary: Option<TrainSummary>,
    pub log: Vec<StepRecord>,
}

impl Checkpoint {
    /// A freshly initialized model, identity-mapped over `schema` unless a
    /// mapping is given.
    pub fn fresh(
        config: ModelConfig,
        tokenizer: TextTokenizer,
        schema: TypeSchema,
        mapping: Option<LabelMapping>,
        seed: u64,
    ) -> Result<Self> {
        if config.vocab_size != tokenizer.vocab().len() {
            return Err(Error::Incompatible(format!(
                "model vocabulary {} != tokenizer vocabulary {}",
                config.vocab_size,
                tokenizer.vocab().len()
            )));
        }
        let mapping = match mapping {
            Some(m) => m,
            None => build_phrase_table(&schema, &Default::default())?.0,
        };
        Ok(Self {
            model: TypingModel::new(config, seed)?,
            tokenizer,
            schema,
            mapping,
            train_config: None,
            summary: None,
            log: Vec::new(),
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(self, dir)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        load_checkpoint(dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub total_bytes: u64,
    pub params: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredConfig {
    model: ModelConfig,
    tokenizer: TokenizerKind,
    schema_kind: SchemaKind,
    multi_label: bool,
    train: Option<TrainConfig>,
    summary: Option<TrainSummary>,
}

pub fn encode_params(params: &ParamStore) -> (Manifest, Vec<u8>) {
    let mut blob = Vec::with_capacity(params.num_scalars() * 8);
    let mut entries = Vec::with_capacity(params.len());
    for (_, name, value) in params.iter() {
        entries.push(ManifestEntry {
            name: name.to_owned(),
            shape: [value.nrows(), value.ncols()],
            dtype: DTYPE.into(),
            offset: blob.len() as u64,
        });
        for x in value.iter() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        total_bytes: blob.len() as u64,
        params: entries,
    };
    (manifest, blob)
}

pub fn decode_params(manifest: &Manifest, blob: &[u8]) -> Result<ParamStore> {
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::Integrity(format!(
            "{PARAMS_FILE} has {} bytes, manifest expects {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    let mut store = ParamStore::new();
    for e in &manifest.params {
        if e.dtype != DTYPE {
            return Err(Error::Integrity(format!(
                "{}: unsupported dtype {}",
                e.name, e.dtype
            )));
        }
        if store.id(&e.name).is_some() {
            return Err(Error::Integrity(format!("{}: listed twice", e.name)));
        }
        let [rows, cols] = e.shape;
        let start = e.offset as usize;
        let end = start + rows * cols * 8;
        if end > blob.len() {
            return Err(Error::Integrity(format!(
                "{}: bytes {start}..{end} past the end of the blob ({})",
                e.name,
                blob.len()
            )));
        }
        let values: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        store.add(e.name.clone(), m);
    }
    Ok(store)
}

fn write(dir: &Path, file: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn read(dir: &Path, file: &str) -> Result<Vec<u8>> {
    let path = dir.join(file);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn read_text(dir: &Path, file: &str) -> Result<String> {
    String::from_utf8(read(dir, file)?)
        .map_err(|e| Error::Integrity(format!("{file} is not UTF-8: {e}")))
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, blob) = encode_params(ckpt.model.params());
    let config = StoredConfig {
        model: ckpt.model.config().clone(),
        tokenizer: ckpt.tokenizer.kind(),
        schema_kind: ckpt.schema.kind(),
        multi_label: ckpt.schema.multi_label(),
        train: ckpt.train_config.clone(),
        summary: ckpt.summary,
    };
    let mut log = String::new();
    for r in &ckpt.log {
        log.push_str(&serde_json::to_string(r)?);
        log.push('\n');
    }
    write(
        dir,
        MANIFEST_FILE,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    write(dir, PARAMS_FILE, blob)?;
    write(
        dir,
        CONFIG_FILE,
        serde_json::to_string_pretty(&config)? + "\n",
    )?;
    write(dir, VOCAB_FILE, ckpt.tokenizer.vocab().to_text())?;
    write(dir, SCHEMA_FILE, ckpt.schema.to_text())?;
    write(dir, MAPPING_FILE, ckpt.mapping.to_tsv())?;
    write(dir, LOG_FILE, log)?;
    Ok(())
}

/// Reads only the parameters of a checkpoint directory.
pub fn load_params(dir: impl AsRef<Path>) -> Result<ParamStore> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&read(dir, MANIFEST_FILE)?)
        .map_err(|e| Error::Integrity(format!("{MANIFEST_FILE}: {e}")))?;
    decode_params(&manifest, &read(dir, PARAMS_FILE)?)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let config: StoredConfig = serde_json::from_slice(&read(dir, CONFIG_FILE)?)
        .map_err(|e| Error::Integrity(format!("{CONFIG_FILE}: {e}")))?;
    let params = load_params(dir)?;
    let vocab = Vocabulary::parse(&read_text(dir, VOCAB_FILE)?)?;
    if vocab.len() != config.model.vocab_size {
        return Err(Error::Incompatible(format!(
            "{VOCAB_FILE} has {} tokens, model expects {}",
            vocab.len(),
            config.model.vocab_size
        )));
    }
    let tokenizer = TextTokenizer::new(config.tokenizer, vocab);
    let mut model = TypingModel::new(config.model, 0)?;
    model.load_params(&params)?;
    let schema = TypeSchema::parse(&read_text(dir, SCHEMA_FILE)?, config.schema_kind)?
        .with_multi_label(config.multi_label);
    let mapping = LabelMapping::from_tsv(&read_text(dir, MAPPING_FILE)?)?;
    let mut log = Vec::new();
    for (i, line) in read_text(dir, LOG_FILE)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        log.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{LOG_FILE}: {e}"),
        })?);
    }
    Ok(Checkpoint {
        model,
        tokenizer,
        schema,
        mapping,
        train_config: config.train,
        summary: config.summary,
        log,
    })
}
