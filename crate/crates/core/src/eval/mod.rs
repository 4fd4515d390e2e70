//! Decoding scores into label sets, and the typing metrics.

mod metrics;
mod protocol;

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use metrics::{fet_metrics, ufet_macro_prf, FetMetrics, MacroPrf};
pub use protocol::{run_fewshot_protocol, ProtocolReport, SeedResult};

use crate::checkpoint::Checkpoint;
use crate::corpus::MentionExample;
use crate::error::{Error, Result};
use crate::model::{ScoreMatrix, TypingModel};
use crate::schema::{LabelMapping, SchemaKind, TypeSchema};
use crate::sequence::{ModelInput, SequenceBuilder};
use crate::tokenizer::{pad_type_batch, Tokenizer};

const SCORE_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    UfetMultilabel,
    FetMultilabel,
    FetSinglePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    /// Probability threshold; unused by `FetSinglePath`.
    pub threshold: f64,
    pub nonempty_fallback: bool,
    pub hierarchical_closure: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::for_mode(DecodeMode::UfetMultilabel)
    }
}

impl DecodeConfig {
    pub fn for_mode(mode: DecodeMode) -> Self {
        Self {
            mode,
            threshold: 0.5,
            nonempty_fallback: true,
            hierarchical_closure: mode != DecodeMode::UfetMultilabel,
        }
    }

    /// Free-form schemas decode as UFET, hierarchical ones as multi-label or
    /// single-path FET depending on the schema flag.
    pub fn for_schema(schema: &TypeSchema) -> Self {
        Self::for_mode(match (schema.kind(), schema.multi_label()) {
            (SchemaKind::FreeForm, _) => DecodeMode::UfetMultilabel,
            (SchemaKind::Hierarchical, true) => DecodeMode::FetMultilabel,
            (SchemaKind::Hierarchical, false) => DecodeMode::FetSinglePath,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "decode.threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: Option<String>,
    /// Predicted labels in schema order.
    pub pred_labels: Vec<String>,
    /// Raw scores aligned with the schema labels.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub labels: Vec<String>,
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn label_sets(&self) -> Vec<Vec<String>> {
        self.predictions
            .iter()
            .map(|p| p.pred_labels.clone())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for p in &self.predictions {
            s.push_str(&serde_json::to_string(p).expect("predictions serialize"));
            s.push('\n');
        }
        s
    }
}

fn argmax(values: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        // Strict comparison keeps the first maximum.
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Decodes one row of scores (aligned with `schema.labels()`).
pub fn decode_row(scores: &[f64], schema: &TypeSchema, cfg: &DecodeConfig) -> Vec<String> {
    assert_eq!(
        scores.len(),
        schema.len(),
        "score row does not match schema"
    );
    let labels = schema.labels();
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    match cfg.mode {
        DecodeMode::FetSinglePath => {
            let leaves: BTreeSet<&str> = schema.leaves().into_iter().collect();
            let leaf = argmax(
                labels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| leaves.contains(l.as_str()))
                    .map(|(i, _)| (i, scores[i])),
            );
            if let Some(i) = leaf {
                chosen.insert(i);
                for a in schema.ancestors(&labels[i]) {
                    chosen.extend(schema.position(a));
                }
            }
        }
        DecodeMode::UfetMultilabel | DecodeMode::FetMultilabel => {
            for (i, &s) in scores.iter().enumerate() {
                if crate::autograd::sigmoid(s) > cfg.threshold {
                    chosen.insert(i);
                }
            }
            if chosen.is_empty() && cfg.nonempty_fallback {
                chosen.extend(argmax(scores.iter().copied().enumerate()));
            }
            if cfg.mode == DecodeMode::FetMultilabel && cfg.hierarchical_closure {
                let direct: Vec<usize> = chosen.iter().copied().collect();
                for i in direct {
                    for a in schema.ancestors(&labels[i]) {
                        chosen.extend(schema.position(a));
                    }
                }
            }
        }
    }
    chosen.into_iter().map(|i| labels[i].clone()).collect()
}

pub fn decode(scores: &ScoreMatrix, schema: &TypeSchema, cfg: &DecodeConfig) -> Vec<Vec<String>> {
    scores
        .scores
        .rows()
        .into_iter()
        .map(|r| decode_row(&r.to_vec(), schema, cfg))
        .collect()
}

/// Scores every example against every schema label through its phrase.
pub fn score_examples(
    model: &TypingModel,
    tokenizer: &dyn Tokenizer,
    examples: &[MentionExample],
    schema: &TypeSchema,
    mapping: &LabelMapping,
) -> Result<ScoreMatrix> {
    let phrases = mapping.phrases_for(schema)?;
    let types = pad_type_batch(tokenizer, &phrases)?;
    let builder = SequenceBuilder::new(tokenizer, model.config().max_len);
    let inputs = examples
        .iter()
        .map(|ex| builder.build_et_input(ex))
        .collect::<Result<Vec<ModelInput>>>()?;
    let mut out = Array2::zeros((examples.len(), schema.len()));
    for (c, chunk) in inputs.chunks(SCORE_CHUNK).enumerate() {
        let refs: Vec<&ModelInput> = chunk.iter().collect();
        let s = model.score(&refs, &types);
        let start = c * SCORE_CHUNK;
        out.slice_mut(ndarray::s![start..start + chunk.len(), ..])
            .assign(&s.scores);
    }
    Ok(ScoreMatrix { scores: out })
}

/// Scores and decodes `examples` with a model and its tokenizer.
pub fn predict_with(
    model: &TypingModel,
    tokenizer: &dyn Tokenizer,
    examples: &[MentionExample],
    schema: &TypeSchema,
    mapping: &LabelMapping,
    cfg: &DecodeConfig,
) -> Result<PredictionSet> {
    cfg.validate()?;
    mapping.phrases_for(schema)?;
    let scores = score_examples(model, tokenizer, examples, schema, mapping)?;
    let sets = decode(&scores, schema, cfg);
    let predictions = examples
        .iter()
        .zip(sets)
        .zip(scores.scores.rows())
        .map(|((ex, pred_labels), row)| Prediction {
            example_id: ex.id.clone(),
            pred_labels,
            scores: row.to_vec(),
        })
        .collect();
    Ok(PredictionSet {
        labels: schema.labels().to_vec(),
        predictions,
    })
}

pub fn predict(
    checkpoint: &Checkpoint,
    examples: &[MentionExample],
    schema: &TypeSchema,
    mapping: &LabelMapping,
    cfg: &DecodeConfig,
) -> Result<PredictionSet> {
    predict_with(
        &checkpoint.model,
        &checkpoint.tokenizer,
        examples,
        schema,
        mapping,
        cfg,
    )
}

/// Metrics for one prediction run; which block is filled depends on the schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ufet: Option<MacroPrf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fet: Option<FetMetrics>,
}

impl EvalReport {
    /// The number used for model selection: UFET F1 or FET macro-F1.
    pub fn macro_f1(&self) -> f64 {
        match (self.ufet, self.fet) {
            (Some(u), _) => u.f1,
            (None, Some(f)) => f.macro_f1,
            (None, None) => 0.0,
        }
    }
}

pub fn evaluate_predictions(
    preds: &PredictionSet,
    examples: &[MentionExample],
    kind: SchemaKind,
) -> Result<EvalReport> {
    let golds: Vec<Vec<String>> = examples.iter().map(|e| e.labels.clone()).collect();
    let sets = preds.label_sets();
    Ok(match kind {
        SchemaKind::FreeForm => EvalReport {
            ufet: Some(ufet_macro_prf(&sets, &golds)?),
            fet: None,
        },
        SchemaKind::Hierarchical => EvalReport {
            ufet: None,
            fet: Some(fet_metrics(&sets, &golds)?),
        },
    })
}
