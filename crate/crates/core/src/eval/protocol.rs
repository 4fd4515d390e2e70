use serde::{Deserialize, Serialize};

use super::{evaluate_predictions, predict, DecodeConfig, FetMetrics};
use crate::checkpoint::Checkpoint;
use crate::corpus::{sample_fewshot, FewShotOptions, MentionExample};
use crate::error::{Error, Result};
use crate::schema::{LabelMapping, TypeSchema};
use crate::train::{finetune_fet, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_size: usize,
    pub dev_size: usize,
    pub best_step: Option<usize>,
    pub metrics: FetMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub per_seed: Vec<SeedResult>,
    pub mean: FetMetrics,
}

fn mean(rows: &[FetMetrics]) -> FetMetrics {
    let n = rows.len() as f64;
    let avg = |f: fn(&FetMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    FetMetrics {
        strict_accuracy: avg(|m| m.strict_accuracy),
        micro_precision: avg(|m| m.micro_precision),
        micro_recall: avg(|m| m.micro_recall),
        micro_f1: avg(|m| m.micro_f1),
        macro_f1: avg(|m| m.macro_f1),
    }
}

/// The repeated few-shot protocol: for each seed, sample a k-shot train/dev
/// split from `pool`, fine-tune from `start`, and evaluate on the fixed `test`.
#[allow(clippy::too_many_arguments)]
pub fn run_fewshot_protocol(
    start: &Checkpoint,
    pool: &[MentionExample],
    test: &[MentionExample],
    schema: &TypeSchema,
    mapping: &LabelMapping,
    k: usize,
    seeds: &[u64],
    config: &TrainConfig,
    decode: &DecodeConfig,
    opts: FewShotOptions,
) -> Result<ProtocolReport> {
    if seeds.is_empty() {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = sample_fewshot(pool, schema, k, seed, opts)?;
        let mut cfg = config.clone();
        cfg.seed = seed;
        let tuned = finetune_fet(start, &split, schema, mapping, &cfg)?;
        let preds = predict(&tuned, test, schema, mapping, decode)?;
        let report = evaluate_predictions(&preds, test, schema.kind())?;
        let metrics = report
            .fet
            .ok_or_else(|| Error::Config("few-shot protocol needs a hierarchical schema".into()))?;
        log::info!("seed {seed}: test macro-F1 {:.4}", metrics.macro_f1);
        per_seed.push(SeedResult {
            seed,
            train_size: split.train.len(),
            dev_size: split.dev.len(),
            best_step: tuned.summary.and_then(|s| s.best_step),
            metrics,
        });
    }
    let rows: Vec<FetMetrics> = per_seed.iter().map(|r| r.metrics).collect();
    Ok(ProtocolReport {
        mean: mean(&rows),
        per_seed,
    })
}
