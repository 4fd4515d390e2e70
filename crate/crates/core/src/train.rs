//! The two training stages: multi-task pretraining on a free-form corpus and
//! typing-only fine-tuning on a few-shot hierarchical split.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, ParamId, ParamStore, Tape};
use crate::checkpoint::{Checkpoint, TrainSummary};
use crate::corpus::{FewShotSplit, MentionExample};
use crate::error::{Error, Result};
use crate::eval::{evaluate_predictions, predict_with, DecodeConfig};
use crate::model::TypingModel;
use crate::objectives::{record_losses, EtNormalization, LabelMatrix, LossWeights, StepBatch};
use crate::schema::{build_phrase_table, LabelMapping, SchemaKind, TypeSchema};
use crate::sequence::{apply_mlm_corruption, ModelInput, SequenceBuilder, Side};
use crate::tokenizer::{pad_type_batch, TextTokenizer, TokenId, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PretrainUfet,
    FinetuneFet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lambda_mlm: f64,
    pub lambda_nwp: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Steps between dev evaluations.
    pub eval_every: usize,
    /// Dev evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Loss weight of positive labels that came from prompting.
    pub prompt_weight: f64,
    pub mlm_rate: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    /// Linear learning-rate warmup; 0 disables it.
    pub warmup_steps: usize,
    pub et_norm: EtNormalization,
    /// Decoding used for dev model selection.
    pub decode: DecodeConfig,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        Self {
            stage: Stage::PretrainUfet,
            lambda_mlm: LossWeights::PRETRAIN.mlm,
            lambda_nwp: LossWeights::PRETRAIN.nwp,
            learning_rate: 1e-3,
            batch_size: 16,
            max_steps: 2000,
            eval_every: 100,
            patience: 5,
            seed: 0,
            prompt_weight: 0.5,
            mlm_rate: 0.15,
            grad_clip: 1.0,
            warmup_steps: 0,
            et_norm: EtNormalization::Examples,
            decode: DecodeConfig::default(),
        }
    }

    pub fn finetune() -> Self {
        Self {
            stage: Stage::FinetuneFet,
            lambda_mlm: 0.0,
            lambda_nwp: 0.0,
            max_steps: 300,
            eval_every: 20,
            decode: DecodeConfig::for_mode(crate::eval::DecodeMode::FetMultilabel),
            ..Self::pretrain()
        }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::PretrainUfet => Self::pretrain(),
            Stage::FinetuneFet => Self::finetune(),
        }
    }

    /// Loss weights in effect; fine-tuning always uses the typing loss alone.
    pub fn loss_weights(&self) -> LossWeights {
        match self.stage {
            Stage::PretrainUfet => LossWeights {
                mlm: self.lambda_mlm,
                nwp: self.lambda_nwp,
            },
            Stage::FinetuneFet => LossWeights::FINETUNE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            );
        }
        if !(self.mlm_rate > 0.0 && self.mlm_rate < 1.0) {
            return bad(
                "mlm_rate",
                format!("must be in (0, 1), got {}", self.mlm_rate),
            );
        }
        if !(self.prompt_weight > 0.0 && self.prompt_weight <= 1.0) {
            return bad(
                "prompt_weight",
                format!("must be in (0, 1], got {}", self.prompt_weight),
            );
        }
        if !(self.grad_clip > 0.0) {
            return bad(
                "grad_clip",
                format!("must be positive, got {}", self.grad_clip),
            );
        }
        if !(self.lambda_mlm >= 0.0) {
            return bad(
                "lambda_mlm",
                format!("must be non-negative, got {}", self.lambda_mlm),
            );
        }
        if !(self.lambda_nwp >= 0.0) {
            return bad(
                "lambda_nwp",
                format!("must be non-negative, got {}", self.lambda_nwp),
            );
        }
        self.decode.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss_et: f64,
    pub loss_mlm: f64,
    pub loss_nwp: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_macro_f1: Option<f64>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, p)| Array2::zeros(p.dim()))
                .collect()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for i in 0..params.len() {
            let Some(g) = grads.get(ParamId(i)) else {
                continue;
            };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.get_mut(ParamId(i));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

struct Prepared {
    et: ModelInput,
    nwp: Vec<(ModelInput, TokenId)>,
}

fn prepare(
    examples: &[MentionExample],
    builder: &SequenceBuilder,
    with_nwp: bool,
) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|ex| {
            let et = builder.build_et_input(ex)?;
            let mut nwp = Vec::new();
            if with_nwp {
                for side in [Side::Left, Side::Right] {
                    if let Some(pair) = builder.build_nwp_input(ex, side)? {
                        nwp.push(pair);
                    }
                }
            }
            Ok(Prepared { et, nwp })
        })
        .collect()
}

/// Seed for the MLM corruption of one example at one step.
fn corruption_seed(seed: u64, step: usize, slot: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (slot as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    if config.warmup_steps > 0 && step <= config.warmup_steps {
        config.learning_rate * step as f64 / config.warmup_steps as f64
    } else {
        config.learning_rate
    }
}

/// Inputs to one run of the shared training loop.
struct Run<'a> {
    model: TypingModel,
    tokenizer: &'a TextTokenizer,
    train: &'a [MentionExample],
    dev: Option<&'a [MentionExample]>,
    schema: &'a TypeSchema,
    mapping: &'a LabelMapping,
    config: &'a TrainConfig,
}

fn run_loop(run: Run) -> Result<(TypingModel, Vec<StepRecord>, TrainSummary)> {
    let Run {
        mut model,
        tokenizer,
        train,
        dev,
        schema,
        mapping,
        config,
    } = run;
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let weights = config.loss_weights();
    let phrases = mapping.phrases_for(schema)?;
    let types = pad_type_batch(tokenizer, &phrases)?;
    let builder = SequenceBuilder::new(tokenizer, model.config().max_len);
    let prepared = prepare(train, &builder, weights.nwp > 0.0)?;
    let labels = schema.labels().to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut adam = Adam::new(model.params());
    let mut log = Vec::with_capacity(config.max_steps);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0;
    let mut steps_run = 0;
    let mut stopped_early = false;

    for step in 1..=config.max_steps {
        let mut batch_idx = Vec::with_capacity(config.batch_size);
        while batch_idx.len() < config.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }

        let et_inputs: Vec<ModelInput> = batch_idx
            .iter()
            .enumerate()
            .map(|(slot, &i)| {
                if weights.mlm > 0.0 {
                    let seed = corruption_seed(config.seed, step, slot);
                    apply_mlm_corruption(&prepared[i].et, config.mlm_rate, seed, tokenizer)
                } else {
                    prepared[i].et.clone()
                }
            })
            .collect();
        let batch_examples: Vec<&MentionExample> = batch_idx.iter().map(|&i| &train[i]).collect();
        let step_batch = StepBatch {
            et_inputs,
            labels: LabelMatrix::from_examples(&batch_examples, &labels, config.prompt_weight)?,
            types: &types,
            nwp: batch_idx
                .iter()
                .flat_map(|&i| prepared[i].nwp.iter().cloned())
                .collect(),
        };

        let (mut grads, bundle) = {
            let mut tape = Tape::new(model.params());
            let (vars, bundle) =
                record_losses(&mut tape, &model, &step_batch, weights, config.et_norm)?;
            (tape.backward(vars.total), bundle)
        };
        let grad_norm = grads.global_norm();
        if !bundle.total.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                step,
                batch: batch_idx,
                detail: format!(
                    "L_ET={} L_MLM={} L_NWP={} grad_norm={}",
                    bundle.et, bundle.mlm, bundle.nwp, grad_norm
                ),
            });
        }
        if grad_norm > config.grad_clip {
            grads.scale(config.grad_clip / grad_norm);
        }
        let lr = lr_at(config, step);
        adam.step(model.params_mut(), &grads, lr);
        steps_run = step;

        let mut record = StepRecord {
            step,
            loss_et: bundle.et,
            loss_mlm: bundle.mlm,
            loss_nwp: bundle.nwp,
            loss: bundle.total,
            grad_norm,
            lr,
            dev_macro_f1: None,
        };
        log::debug!(
            "step {step} L={:.5} L_ET={:.5} L_MLM={:.5} L_NWP={:.5}",
            bundle.total,
            bundle.et,
            bundle.mlm,
            bundle.nwp
        );

        let at_eval = step % config.eval_every == 0 || step == config.max_steps;
        if let (Some(dev), true) = (dev, at_eval) {
            let preds = predict_with(&model, tokenizer, dev, schema, mapping, &config.decode)?;
            let f1 = evaluate_predictions(&preds, dev, schema.kind())?.macro_f1();
            record.dev_macro_f1 = Some(f1);
            log::info!("step {step}: dev macro-F1 {f1:.4}");
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, step, model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            log.push(record);
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
            continue;
        }
        log.push(record);
    }

    let summary = match best {
        Some((f1, step, params)) => {
            model.load_params(&params)?;
            TrainSummary {
                steps_run,
                best_step: Some(step),
                best_dev_macro_f1: Some(f1),
                stopped_early,
            }
        }
        None => TrainSummary {
            steps_run,
            best_step: None,
            best_dev_macro_f1: None,
            stopped_early,
        },
    };
    Ok((model, log, summary))
}

/// Multi-task pretraining on a free-form corpus.
///
/// Returns the parameters with the best dev score, or the final ones when no
/// dev set is given.
pub fn pretrain_ufet(
    model: TypingModel,
    tokenizer: TextTokenizer,
    train: &[MentionExample],
    dev: Option<&[MentionExample]>,
    schema: &TypeSchema,
    config: &TrainConfig,
) -> Result<Checkpoint> {
    if schema.kind() != SchemaKind::FreeForm {
        return Err(Error::Config(
            "pretrain_ufet needs a free_form schema".into(),
        ));
    }
    if config.stage != Stage::PretrainUfet {
        return Err(Error::Config("stage: pretrain_ufet expected".into()));
    }
    check_vocab(&model, &tokenizer)?;
    let (mapping, _) = build_phrase_table(schema, &Default::default())?;
    let (model, log, summary) = run_loop(Run {
        model,
        tokenizer: &tokenizer,
        train,
        dev,
        schema,
        mapping: &mapping,
        config,
    })?;
    Ok(Checkpoint {
        model,
        tokenizer,
        schema: schema.clone(),
        mapping,
        train_config: Some(config.clone()),
        summary: Some(summary),
        log,
    })
}

/// Typing-only fine-tuning from `start`. Every parameter comes from the
/// checkpoint; types are scored through their phrases, so nothing is added.
pub fn finetune_fet(
    start: &Checkpoint,
    split: &FewShotSplit,
    schema: &TypeSchema,
    mapping: &LabelMapping,
    config: &TrainConfig,
) -> Result<Checkpoint> {
    if schema.kind() != SchemaKind::Hierarchical {
        return Err(Error::Config(
            "finetune_fet needs a hierarchical schema".into(),
        ));
    }
    if config.stage != Stage::FinetuneFet {
        return Err(Error::Config("stage: finetune_fet expected".into()));
    }
    if split.train.is_empty() {
        return Err(Error::Input(
            "few-shot split has no training examples".into(),
        ));
    }
    if config.lambda_mlm != 0.0 || config.lambda_nwp != 0.0 {
        log::warn!("fine-tuning ignores lambda_mlm / lambda_nwp");
    }
    check_vocab(&start.model, &start.tokenizer)?;
    let mut model = TypingModel::new(start.model.config().clone(), config.seed)?;
    model.load_params(start.model.params())?;
    let dev = (!split.dev.is_empty()).then_some(split.dev.as_slice());
    let mut config = config.clone();
    config.lambda_mlm = 0.0;
    config.lambda_nwp = 0.0;
    let (model, log, summary) = run_loop(Run {
        model,
        tokenizer: &start.tokenizer,
        train: &split.train,
        dev,
        schema,
        mapping,
        config: &config,
    })?;
    Ok(Checkpoint {
        model,
        tokenizer: start.tokenizer.clone(),
        schema: schema.clone(),
        mapping: mapping.clone(),
        train_config: Some(config),
        summary: Some(summary),
        log,
    })
}

fn check_vocab(model: &TypingModel, tokenizer: &TextTokenizer) -> Result<()> {
    let (m, t) = (model.config().vocab_size, tokenizer.vocab().len());
    if m != t {
        return Err(Error::Incompatible(format!(
            "embeddings.token: model vocabulary {m} != tokenizer vocabulary {t}"
        )));
    }
    Ok(())
}
