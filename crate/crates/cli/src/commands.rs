use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use typeforge::checkpoint::Checkpoint;
use typeforge::corpus::{
    generate_synthetic_corpus, read_examples, read_raw_examples, sample_fewshot as sample,
    write_examples, FewShotOptions, FewShotSplit, GeneratorConfig, MentionExample,
};
use typeforge::eval::{
    evaluate_predictions, predict as predict_set, run_fewshot_protocol, DecodeConfig, DecodeMode,
};
use typeforge::model::{ModelConfig, TypingModel};
use typeforge::schema::{build_phrase_table, load_overrides, LabelMapping, SchemaKind, TypeSchema};
use typeforge::tokenizer::{TextTokenizer, TokenizerKind, VocabBuilder};
use typeforge::train::{finetune_fet as finetune, pretrain_ufet as pretrain, Stage, TrainConfig};

use crate::cache::VocabCache;
use crate::config::{defaults, parse_override, read_config_file, section_check, Flat, Resolver};
use crate::Common;

pub const SNAPSHOT_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TokKind {
    Word,
    Wordpiece,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenizerSettings {
    kind: TokKind,
    /// WordPiece only.
    lowercase: bool,
    /// Vocabulary file; built from the corpora when absent.
    vocab: Option<PathBuf>,
    /// Extra JSONL corpora whose words join the built vocabulary.
    extra_corpora: Vec<PathBuf>,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        Self {
            kind: TokKind::Word,
            lowercase: true,
            vocab: None,
            extra_corpora: Vec::new(),
        }
    }
}

/// `mode` and `hierarchical_closure` follow the schema when left null.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeSettings {
    mode: Option<DecodeMode>,
    threshold: f64,
    nonempty_fallback: bool,
    hierarchical_closure: Option<bool>,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        let d = DecodeConfig::default();
        Self {
            mode: None,
            threshold: d.threshold,
            nonempty_fallback: d.nonempty_fallback,
            hierarchical_closure: None,
        }
    }
}

impl DecodeSettings {
    fn for_schema(&self, schema: &TypeSchema) -> Result<DecodeConfig> {
        let base = match self.mode {
            Some(m) => DecodeConfig::for_mode(m),
            None => DecodeConfig::for_schema(schema),
        };
        let cfg = DecodeConfig {
            threshold: self.threshold,
            nonempty_fallback: self.nonempty_fallback,
            hierarchical_closure: self
                .hierarchical_closure
                .unwrap_or(base.hierarchical_closure),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaSettings {
    /// Hierarchical schemas only: false makes decoding single-path.
    multi_label: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FewShotSettings {
    seed: u64,
    allow_deficient: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

fn without(mut v: Value, keys: &[&str]) -> Value {
    if let Value::Object(map) = &mut v {
        for k in keys {
            map.remove(*k);
        }
    }
    v
}

fn train_defaults(stage: Stage) -> Value {
    without(
        to_value(&TrainConfig::for_stage(stage)),
        &["stage", "decode"],
    )
}

fn model_defaults() -> Value {
    without(to_value(&ModelConfig::desk(0)), &["vocab_size"])
}

fn part(doc: &Value, name: &str) -> Map<String, Value> {
    doc.get(name)
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_default()
}

fn train_from(doc: &Value, stage: Stage, decode: DecodeConfig) -> Result<TrainConfig> {
    let mut m = part(doc, "train");
    m.insert("stage".into(), to_value(&stage));
    m.insert("decode".into(), to_value(&decode));
    let cfg: TrainConfig =
        serde_json::from_value(Value::Object(m)).map_err(|e| anyhow::anyhow!("train: {e}"))?;
    Ok(cfg)
}

fn model_from(doc: &Value, vocab_size: usize) -> Result<ModelConfig> {
    let mut m = part(doc, "model");
    m.insert("vocab_size".into(), json!(vocab_size));
    let cfg: ModelConfig =
        serde_json::from_value(Value::Object(m)).map_err(|e| anyhow::anyhow!("model: {e}"))?;
    cfg.validate().context("model")?;
    Ok(cfg)
}

/// Which sections a command reads.
#[derive(Clone, Copy, Default)]
struct Sections {
    train: Option<Stage>,
    model: bool,
    tokenizer: bool,
    decode: bool,
    schema: bool,
    fewshot: bool,
}

impl Sections {
    fn defaults(self) -> Flat {
        let mut parts: Vec<(&str, Value)> = Vec::new();
        if let Some(stage) = self.train {
            parts.push(("train", train_defaults(stage)));
        }
        if self.model {
            parts.push(("model", model_defaults()));
        }
        if self.tokenizer {
            parts.push(("tokenizer", to_value(&TokenizerSettings::default())));
        }
        if self.decode {
            parts.push(("decode", to_value(&DecodeSettings::default())));
        }
        if self.schema {
            parts.push(("schema", json!({"multi_label": true})));
        }
        if self.fewshot {
            parts.push(("fewshot", json!({"seed": 0, "allow_deficient": false})));
        }
        defaults(&parts)
    }

    fn check(self, doc: &Value) -> Result<()> {
        if let Some(stage) = self.train {
            train_from(doc, stage, DecodeConfig::default())?;
        }
        if self.model {
            let mut m = part(doc, "model");
            m.insert("vocab_size".into(), json!(1));
            serde_json::from_value::<ModelConfig>(Value::Object(m))?;
        }
        if self.tokenizer {
            section_check::<TokenizerSettings>(doc, "tokenizer")?;
        }
        if self.decode {
            section_check::<DecodeSettings>(doc, "decode")?;
        }
        if self.schema {
            section_check::<SchemaSettings>(doc, "schema")?;
        }
        if self.fewshot {
            section_check::<FewShotSettings>(doc, "fewshot")?;
        }
        Ok(())
    }

    fn resolve(self, common: &Common, seed_key: Option<&str>) -> Result<Resolved> {
        let mut r = Resolver::new(self.defaults(), move |doc| self.check(doc));
        if let Some(path) = &common.config {
            r.apply(read_config_file(path)?)?;
        }
        for o in &common.overrides {
            let (k, v) = parse_override(o)?;
            r.set(&k, v)?;
        }
        if let (Some(seed), Some(key)) = (common.seed, seed_key) {
            r.set(key, json!(seed))?;
        }
        let doc = crate::config::unflatten(r.flat());
        Ok(Resolved {
            flat: r.flat().clone(),
            doc,
        })
    }
}

struct Resolved {
    flat: Flat,
    doc: Value,
}

impl Resolved {
    fn get<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        section_check(&self.doc, name)
    }

    fn decode(&self, schema: &TypeSchema) -> Result<DecodeConfig> {
        self.get::<DecodeSettings>("decode")?.for_schema(schema)
    }

    fn multi_label(&self) -> Result<bool> {
        Ok(self.get::<SchemaSettings>("schema")?.multi_label)
    }

    /// Writes the snapshot: command, inputs and every resolved key.
    fn snapshot(&self, path: &Path, command: &str, inputs: Value) -> Result<()> {
        let config: Map<String, Value> = self.flat.clone().into_iter().collect();
        let doc = json!({
            "command": command,
            "inputs": inputs,
            "config": config,
        });
        write_file(path, serde_json::to_string_pretty(&doc)? + "\n")
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Snapshot location for a single-file output.
fn snapshot_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(SNAPSHOT_FILE);
    out.with_file_name(name)
}

fn path_str(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

fn opt_path(p: Option<&Path>) -> Value {
    p.map_or(Value::Null, path_str)
}

/// Hierarchical when every label is a `/`-path, free-form otherwise.
fn detect_kind(text: &str) -> SchemaKind {
    let mut labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    if labels.peek().is_some() && labels.all(|l| l.starts_with('/')) {
        SchemaKind::Hierarchical
    } else {
        SchemaKind::FreeForm
    }
}

fn read_schema(path: &Path, multi_label: bool) -> Result<TypeSchema> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading schema {}", path.display()))?;
    let kind = detect_kind(&text);
    let schema =
        TypeSchema::parse(&text, kind).with_context(|| format!("schema {}", path.display()))?;
    Ok(match kind {
        SchemaKind::Hierarchical => schema.with_multi_label(multi_label),
        SchemaKind::FreeForm => schema,
    })
}

fn mapping_for(schema: &TypeSchema, overrides: Option<&Path>) -> Result<LabelMapping> {
    let overrides = match overrides {
        Some(p) => load_overrides(p).with_context(|| format!("mapping {}", p.display()))?,
        None => Default::default(),
    };
    let (mapping, collisions) = build_phrase_table(schema, &overrides)?;
    if !collisions.is_empty() {
        log::warn!(
            "{} phrase collision(s) in the label mapping",
            collisions.len()
        );
    }
    Ok(mapping)
}

fn read_labeled(path: &Path, schema: &TypeSchema) -> Result<Vec<MentionExample>> {
    read_examples(path, schema).with_context(|| format!("reading {}", path.display()))
}

fn build_tokenizer(
    settings: &TokenizerSettings,
    corpora: &[&Path],
    schema: &TypeSchema,
) -> Result<TextTokenizer> {
    let kind = match settings.kind {
        TokKind::Word => TokenizerKind::Word,
        TokKind::Wordpiece => TokenizerKind::WordPiece {
            lowercase: settings.lowercase,
        },
    };
    if let Some(path) = &settings.vocab {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading vocabulary {}", path.display()))?;
        return Ok(TextTokenizer::parse(kind, &text)?);
    }
    if settings.kind == TokKind::Wordpiece {
        bail!("tokenizer.vocab: a wordpiece tokenizer needs a vocabulary file");
    }
    let mapping = mapping_for(schema, None)?;
    let mut cache = VocabCache::from_env();
    cache.feed(b"word-vocab-v1");
    let mut files = corpora.to_vec();
    files.extend(settings.extra_corpora.iter().map(PathBuf::as_path));
    let mut texts = Vec::with_capacity(files.len());
    for f in &files {
        let bytes = std::fs::read(f).with_context(|| format!("reading {}", f.display()))?;
        cache.feed(&bytes);
        texts.push(f);
    }
    for (_, phrase) in mapping.entries() {
        cache.feed(phrase.as_bytes());
    }
    let mut examples = Vec::new();
    for f in texts {
        examples.extend(read_raw_examples(f).with_context(|| format!("reading {}", f.display()))?);
    }
    let vocab = cache.get_or_build(|| {
        let mut b = VocabBuilder::new();
        for ex in &examples {
            b.add_example(ex);
        }
        for (_, phrase) in mapping.entries() {
            b.add_text(phrase);
        }
        b.build()
    })?;
    Ok(TextTokenizer::new(kind, vocab))
}

pub fn pretrain_ufet(
    common: Common,
    schema_path: &Path,
    train_path: &Path,
    dev_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let sections = Sections {
        train: Some(Stage::PretrainUfet),
        model: true,
        tokenizer: true,
        decode: true,
        ..Default::default()
    };
    let resolved = sections.resolve(&common, Some("train.seed"))?;
    let schema = read_schema(schema_path, true)?;
    if schema.kind() != SchemaKind::FreeForm {
        bail!(
            "pretrain-ufet needs a free-form schema; {} holds /-paths",
            schema_path.display()
        );
    }
    let config = train_from(
        &resolved.doc,
        Stage::PretrainUfet,
        resolved.decode(&schema)?,
    )?;
    config.validate()?;
    let train = read_labeled(train_path, &schema)?;
    let dev = dev_path.map(|p| read_labeled(p, &schema)).transpose()?;

    let mut corpora = vec![train_path];
    corpora.extend(dev_path);
    let tokenizer = build_tokenizer(&resolved.get("tokenizer")?, &corpora, &schema)?;
    let model_cfg = model_from(
        &resolved.doc,
        typeforge::tokenizer::Tokenizer::vocab(&tokenizer).len(),
    )?;
    let model = TypingModel::new(model_cfg, config.seed)?;
    log::info!(
        "pretraining on {} examples, {} types, {} parameters",
        train.len(),
        schema.len(),
        model.params().num_scalars()
    );
    let ckpt = pretrain(model, tokenizer, &train, dev.as_deref(), &schema, &config)?;
    ckpt.save(out)?;
    resolved.snapshot(
        &out.join(SNAPSHOT_FILE),
        "pretrain-ufet",
        json!({"schema": path_str(schema_path), "train": path_str(train_path), "dev": opt_path(dev_path)}),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn finetune_fet(
    common: Common,
    from: &Path,
    schema_path: &Path,
    mapping_path: Option<&Path>,
    train_path: &Path,
    dev_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let sections = Sections {
        train: Some(Stage::FinetuneFet),
        decode: true,
        schema: true,
        ..Default::default()
    };
    let resolved = sections.resolve(&common, Some("train.seed"))?;
    let schema = read_schema(schema_path, resolved.multi_label()?)?;
    if schema.kind() != SchemaKind::Hierarchical {
        bail!("finetune-fet needs a hierarchical schema of /-paths");
    }
    let config = train_from(&resolved.doc, Stage::FinetuneFet, resolved.decode(&schema)?)?;
    config.validate()?;
    let mapping = mapping_for(&schema, mapping_path)?;
    let start = Checkpoint::load(from).with_context(|| format!("loading {}", from.display()))?;
    let train = read_labeled(train_path, &schema)?;
    let dev = match dev_path {
        Some(p) => read_labeled(p, &schema)?,
        None => Vec::new(),
    };
    let split = FewShotSplit {
        train_indices: (0..train.len()).collect(),
        dev_indices: (0..dev.len()).collect(),
        train,
        dev,
        k: 0,
        seed: config.seed,
        deficient: Vec::new(),
    };
    let ckpt = finetune(&start, &split, &schema, &mapping, &config)?;
    ckpt.save(out)?;
    resolved.snapshot(
        &out.join(SNAPSHOT_FILE),
        "finetune-fet",
        json!({
            "from": path_str(from),
            "schema": path_str(schema_path),
            "mapping": opt_path(mapping_path),
            "train": path_str(train_path),
            "dev": opt_path(dev_path),
        }),
    )
}

pub fn sample_fewshot(
    common: Common,
    schema_path: &Path,
    pool_path: &Path,
    k: usize,
    out: &Path,
) -> Result<()> {
    let sections = Sections {
        fewshot: true,
        ..Default::default()
    };
    let resolved = sections.resolve(&common, Some("fewshot.seed"))?;
    let settings: FewShotSettings = resolved.get("fewshot")?;
    let schema = read_schema(schema_path, true)?;
    let pool = read_labeled(pool_path, &schema)?;
    let split = sample(
        &pool,
        &schema,
        k,
        settings.seed,
        FewShotOptions {
            allow_deficient: settings.allow_deficient,
        },
    )?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_examples(out.join("train.jsonl"), &split.train)?;
    write_examples(out.join("dev.jsonl"), &split.dev)?;
    log::info!(
        "{k}-shot split: {} train, {} dev",
        split.train.len(),
        split.dev.len()
    );
    resolved.snapshot(
        &out.join(SNAPSHOT_FILE),
        "sample-fewshot",
        json!({"schema": path_str(schema_path), "train": path_str(pool_path), "k": k}),
    )
}

/// A checkpoint and the label space to score it against.
pub struct Target {
    pub from: PathBuf,
    pub schema: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub threshold: Option<f64>,
}

struct Loaded {
    ckpt: Checkpoint,
    schema: TypeSchema,
    mapping: LabelMapping,
    decode: DecodeConfig,
}

impl Target {
    fn inputs(&self) -> Value {
        json!({
            "from": path_str(&self.from),
            "schema": opt_path(self.schema.as_deref()),
            "mapping": opt_path(self.mapping.as_deref()),
        })
    }

    fn load(&self, resolved: &Resolved) -> Result<Loaded> {
        let ckpt = Checkpoint::load(&self.from)
            .with_context(|| format!("loading {}", self.from.display()))?;
        let schema = match &self.schema {
            Some(p) => read_schema(p, resolved.multi_label()?)?,
            None => ckpt.schema.clone(),
        };
        let mapping = if self.schema.is_some() || self.mapping.is_some() {
            mapping_for(&schema, self.mapping.as_deref())?
        } else {
            ckpt.mapping.clone()
        };
        let decode = resolved.decode(&schema)?;
        Ok(Loaded {
            ckpt,
            schema,
            mapping,
            decode,
        })
    }
}

fn scoring_sections() -> Sections {
    Sections {
        decode: true,
        schema: true,
        ..Default::default()
    }
}

fn with_threshold(mut common: Common, threshold: Option<f64>) -> Common {
    if let Some(t) = threshold {
        common.overrides.push(format!("decode.threshold={t}"));
    }
    common
}

pub fn predict(common: Common, target: &Target, on: &Path, out: &Path) -> Result<()> {
    let common = with_threshold(common, target.threshold);
    let resolved = scoring_sections().resolve(&common, None)?;
    let l = target.load(&resolved)?;
    let examples = read_raw_examples(on).with_context(|| format!("reading {}", on.display()))?;
    let preds = predict_set(&l.ckpt, &examples, &l.schema, &l.mapping, &l.decode)?;
    write_file(out, preds.to_jsonl())?;
    let mut inputs = target.inputs();
    inputs["on"] = path_str(on);
    resolved.snapshot(&snapshot_beside(out), "predict", inputs)
}

pub fn evaluate(common: Common, target: &Target, on: &Path, out: &Path) -> Result<()> {
    let common = with_threshold(common, target.threshold);
    let resolved = scoring_sections().resolve(&common, None)?;
    let l = target.load(&resolved)?;
    let examples = read_labeled(on, &l.schema)?;
    let preds = predict_set(&l.ckpt, &examples, &l.schema, &l.mapping, &l.decode)?;
    let report = evaluate_predictions(&preds, &examples, l.schema.kind())?;
    let mut metrics = match (report.fet, report.ufet) {
        (Some(f), _) => to_value(&f),
        (None, Some(u)) => to_value(&u),
        (None, None) => unreachable!("one metric block is always filled"),
    };
    metrics["examples"] = json!(examples.len());
    write_file(out, serde_json::to_string_pretty(&metrics)? + "\n")?;
    println!("{}", serde_json::to_string(&metrics)?);
    let mut inputs = target.inputs();
    inputs["on"] = path_str(on);
    resolved.snapshot(&snapshot_beside(out), "evaluate", inputs)
}

pub fn evaluate_protocol(
    common: Common,
    target: &Target,
    on: &Path,
    pool: Option<&Path>,
    k: Option<usize>,
    repeats: Option<usize>,
    out: &Path,
) -> Result<()> {
    let (Some(pool), Some(k)) = (pool, k) else {
        bail!("the few-shot protocol needs --train (the pool) and --k");
    };
    let repeats = repeats.unwrap_or(5);
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let common = with_threshold(common, target.threshold);
    let sections = Sections {
        train: Some(Stage::FinetuneFet),
        fewshot: true,
        ..scoring_sections()
    };
    let resolved = sections.resolve(&common, Some("train.seed"))?;
    let l = target.load(&resolved)?;
    if l.schema.kind() != SchemaKind::Hierarchical {
        bail!("the few-shot protocol needs a hierarchical --schema");
    }
    let config = train_from(&resolved.doc, Stage::FinetuneFet, l.decode)?;
    config.validate()?;
    let settings: FewShotSettings = resolved.get("fewshot")?;
    let pool_examples = read_labeled(pool, &l.schema)?;
    let test = read_labeled(on, &l.schema)?;
    let seeds: Vec<u64> = (0..repeats as u64).map(|i| config.seed + i).collect();
    let report = run_fewshot_protocol(
        &l.ckpt,
        &pool_examples,
        &test,
        &l.schema,
        &l.mapping,
        k,
        &seeds,
        &config,
        &l.decode,
        FewShotOptions {
            allow_deficient: settings.allow_deficient,
        },
    )?;
    write_file(out, serde_json::to_string_pretty(&report)? + "\n")?;
    println!("{}", serde_json::to_string(&report.mean)?);
    let mut inputs = target.inputs();
    inputs["on"] = path_str(on);
    inputs["train"] = path_str(pool);
    inputs["k"] = json!(k);
    inputs["repeats"] = json!(repeats);
    resolved.snapshot(&snapshot_beside(out), "evaluate", inputs)
}

pub fn map_labels(
    common: Common,
    schema_path: &Path,
    overrides: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let resolved = Sections::default().resolve(&common, None)?;
    let schema = read_schema(schema_path, true)?;
    let mapping = mapping_for(&schema, overrides)?;
    write_file(out, mapping.to_tsv())?;
    resolved.snapshot(
        &snapshot_beside(out),
        "map-labels",
        json!({"schema": path_str(schema_path), "mapping": opt_path(overrides)}),
    )
}

/// `--config` holds the generator document (types and templates), or a
/// gen-synth snapshot carrying it under `generator`.
pub fn gen_synth(mut common: Common, out: &Path) -> Result<()> {
    let Some(path) = common.config.take() else {
        bail!("gen-synth needs --config with the generator types");
    };
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))?;
    let (generator_doc, previous) = match doc.get("generator") {
        Some(g) => (g.clone(), doc.get("config").cloned()),
        None => (doc, None),
    };
    let generator: GeneratorConfig = serde_json::from_value(generator_doc)
        .with_context(|| format!("generator config {}", path.display()))?;

    let mut r = Resolver::new(
        defaults(&[(
            "synth",
            json!({"seed": 0, "view": to_value(&generator.view)}),
        )]),
        |doc| {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            #[allow(dead_code)]
            struct S {
                seed: u64,
                view: SchemaKind,
            }
            section_check::<S>(doc, "synth").map(|_| ())
        },
    );
    if let Some(Value::Object(prev)) = previous {
        r.apply(prev)?;
    }
    for o in &common.overrides {
        let (k, v) = parse_override(o)?;
        r.set(&k, v)?;
    }
    if let Some(seed) = common.seed {
        r.set("synth.seed", json!(seed))?;
    }
    let flat = r.flat().clone();
    let seed = flat["synth.seed"].as_u64().expect("checked");
    let view: SchemaKind = serde_json::from_value(flat["synth.view"].clone())?;
    let generator = GeneratorConfig { view, ..generator };
    let (examples, schema) = generate_synthetic_corpus(&generator, seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_examples(out.join("corpus.jsonl"), &examples)?;
    write_file(&out.join("schema.txt"), schema.to_text())?;
    log::info!("{} examples over {} labels", examples.len(), schema.len());
    let config: Map<String, Value> = flat.into_iter().collect();
    let snap = json!({
        "command": "gen-synth",
        "inputs": {},
        "config": config,
        "generator": generator,
    });
    write_file(
        &out.join(SNAPSHOT_FILE),
        serde_json::to_string_pretty(&snap)? + "\n",
    )
}
