//! Training objectives: weighted binary cross-entropy over type scores, the
//! masked-language-model loss through the tied head, neighbor-word prediction,
//! and their weighted sum.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, softplus, Tape, Var};
use crate::corpus::{LabelSource, MentionExample};
use crate::error::{Error, Result};
use crate::model::{EncoderBackend, Forward, ScoreMatrix, TypingModel};
use crate::sequence::ModelInput;
use crate::tokenizer::{TokenId, TypeTokenBatch};

/// Gold indicators and per-label loss weights, `B × |types|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub y: Array2<f64>,
    pub w: Array2<f64>,
}

impl LabelMatrix {
    /// Builds targets against `labels` (the type order of the score columns).
    /// Positive labels whose source is `prompt` get `prompt_weight`.
    pub fn from_examples(
        examples: &[&MentionExample],
        labels: &[String],
        prompt_weight: f64,
    ) -> Result<Self> {
        if !(prompt_weight > 0.0 && prompt_weight <= 1.0) {
            return Err(Error::Config(format!(
                "prompt label weight {prompt_weight} outside (0, 1]"
            )));
        }
        let mut y = Array2::zeros((examples.len(), labels.len()));
        let mut w = Array2::ones((examples.len(), labels.len()));
        for (r, ex) in examples.iter().enumerate() {
            for (c, label) in labels.iter().enumerate() {
                if ex.has_label(label) {
                    y[[r, c]] = 1.0;
                    if ex.source_of(label) == Some(LabelSource::Prompt) {
                        w[[r, c]] = prompt_weight;
                    }
                }
            }
        }
        Ok(Self { y, w })
    }

    pub fn unweighted(y: Array2<f64>) -> Self {
        let w = Array2::ones(y.dim());
        Self { y, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtNormalization {
    /// Divide by the number of examples; types are summed.
    #[default]
    Examples,
    /// Divide by examples × types.
    ExamplesAndTypes,
}

impl EtNormalization {
    fn divisor(self, rows: usize, cols: usize) -> f64 {
        match self {
            EtNormalization::Examples => rows as f64,
            EtNormalization::ExamplesAndTypes => (rows * cols) as f64,
        }
    }
}

fn check_shapes(scores: &Array2<f64>, labels: &LabelMatrix) -> Result<()> {
    if scores.dim() != labels.y.dim() || scores.dim() != labels.w.dim() {
        return Err(Error::Input(format!(
            "score shape {:?} does not match labels {:?} / weights {:?}",
            scores.dim(),
            labels.y.dim(),
            labels.w.dim()
        )));
    }
    if scores.nrows() == 0 {
        return Err(Error::Input("empty score matrix".into()));
    }
    Ok(())
}

/// Weighted BCE of sigmoid scores, computed from the logits via softplus.
pub fn et_loss(scores: &ScoreMatrix, labels: &LabelMatrix, norm: EtNormalization) -> Result<f64> {
    check_shapes(&scores.scores, labels)?;
    let mut total = 0.0;
    Zip::from(&scores.scores)
        .and(&labels.y)
        .and(&labels.w)
        .for_each(|&s, &y, &w| total += w * (softplus(s) - y * s));
    Ok(total / norm.divisor(scores.rows(), scores.cols()))
}

/// Closed-form `∂ et_loss / ∂ s = w · (σ(s) − y) / divisor`.
pub fn et_loss_grad(
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
    norm: EtNormalization,
) -> Result<Array2<f64>> {
    check_shapes(&scores.scores, labels)?;
    let div = norm.divisor(scores.rows(), scores.cols());
    let mut g = scores.scores.clone();
    Zip::from(&mut g)
        .and(&labels.y)
        .and(&labels.w)
        .for_each(|s, &y, &w| *s = w * (sigmoid(*s) - y) / div);
    Ok(g)
}

/// Mean cross-entropy of logit rows against target classes; 0 for no rows.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / targets.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mlm: f64,
    pub nwp: f64,
}

impl LossWeights {
    pub const FINETUNE: LossWeights = LossWeights { mlm: 0.0, nwp: 0.0 };
    pub const PRETRAIN: LossWeights = LossWeights { mlm: 0.1, nwp: 0.1 };

    pub fn validate(&self) -> Result<()> {
        if !(self.mlm >= 0.0) || !(self.nwp >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got mlm={} nwp={}",
                self.mlm, self.nwp
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub et: f64,
    pub mlm: f64,
    pub nwp: f64,
    pub lambda_mlm: f64,
    pub lambda_nwp: f64,
    pub total: f64,
}

/// `L = L_ET + λ_MLM · L_MLM + λ_NWP · L_NWP`.
pub fn total_loss(et: f64, mlm: f64, nwp: f64, weights: LossWeights) -> Result<LossBundle> {
    weights.validate()?;
    Ok(LossBundle {
        et,
        mlm,
        nwp,
        lambda_mlm: weights.mlm,
        lambda_nwp: weights.nwp,
        total: et + weights.mlm * mlm + weights.nwp * nwp,
    })
}

/// Everything one optimization step looks at.
pub struct StepBatch<'a> {
    /// Typing inputs; during pretraining these carry the MLM corruption.
    pub et_inputs: Vec<ModelInput>,
    pub labels: LabelMatrix,
    pub types: &'a TypeTokenBatch,
    /// Neighbor-word inputs with their target token.
    pub nwp: Vec<(ModelInput, TokenId)>,
}

/// Tape handles of the recorded losses.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub et: Var,
    pub mlm: Option<Var>,
    pub nwp: Option<Var>,
    pub total: Var,
}

/// Records the full multi-task loss on `tape`.
///
/// The typing and neighbor inputs share one encoder pass. MLM rows are the
/// corrupted positions of the typing inputs (never the type slot).
pub fn record_losses(
    tape: &mut Tape,
    model: &TypingModel,
    batch: &StepBatch,
    weights: LossWeights,
    norm: EtNormalization,
) -> Result<(LossVars, LossBundle)> {
    weights.validate()?;
    let et_refs: Vec<&ModelInput> = batch.et_inputs.iter().collect();
    let aux: Vec<&ModelInput> = if weights.nwp > 0.0 {
        batch.nwp.iter().map(|(i, _)| i).collect()
    } else {
        Vec::new()
    };
    let fwd = model.forward_multi(tape, &et_refs, &aux, batch.types);
    check_shapes(tape.value(fwd.scores), &batch.labels)?;
    let (rows, cols) = tape.value(fwd.scores).dim();
    let et = tape.bce_with_logits(
        fwd.scores,
        batch.labels.y.clone(),
        batch.labels.w.clone(),
        norm.divisor(rows, cols),
    );

    let mlm = if weights.mlm > 0.0 {
        mlm_loss(tape, model, &fwd, &batch.et_inputs)
    } else {
        None
    };
    let nwp = if weights.nwp > 0.0 {
        let targets: Vec<TokenId> = batch.nwp.iter().map(|(_, t)| *t).collect();
        nwp_loss(tape, model, &fwd, &aux, batch.et_inputs.len(), &targets)
    } else {
        None
    };

    let mut terms = vec![(et, 1.0)];
    terms.extend(mlm.map(|v| (v, weights.mlm)));
    terms.extend(nwp.map(|v| (v, weights.nwp)));
    let total = tape.combine(terms);

    let scalar = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
    let bundle = total_loss(tape.scalar(et), scalar(mlm), scalar(nwp), weights)?;
    Ok((
        LossVars {
            et,
            mlm,
            nwp,
            total,
        },
        bundle,
    ))
}

/// Mean cross-entropy over the corrupted positions through the tied MLM head.
/// `None` when nothing was corrupted.
pub fn mlm_loss(
    tape: &mut Tape,
    model: &TypingModel,
    fwd: &Forward,
    inputs: &[ModelInput],
) -> Option<Var> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (inp, off) in inputs.iter().zip(&fwd.offsets) {
        for (&pos, &orig) in &inp.mlm_targets {
            debug_assert_ne!(pos, inp.slot_index, "type slot must not be an MLM target");
            rows.push(off + pos);
            targets.push(orig as usize);
        }
    }
    if rows.is_empty() {
        return None;
    }
    let h = tape.gather(fwd.hidden, rows);
    let logits = model.backend().mlm_logits(tape, h);
    Some(tape.cross_entropy(logits, targets))
}

/// Mean cross-entropy of the neighbor head at the slots of `aux` inputs, which
/// follow the first `skip` inputs in the forward pass.
pub fn nwp_loss(
    tape: &mut Tape,
    model: &TypingModel,
    fwd: &Forward,
    aux: &[&ModelInput],
    skip: usize,
    targets: &[TokenId],
) -> Option<Var> {
    if aux.is_empty() {
        return None;
    }
    let rows: Vec<usize> = aux
        .iter()
        .zip(&fwd.offsets[skip..])
        .map(|(inp, off)| off + inp.slot_index)
        .collect();
    let h = tape.gather(fwd.hidden, rows);
    let logits = model.neighbor_head().logits(tape, h);
    Some(tape.cross_entropy(logits, targets.iter().map(|&t| t as usize).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sm(s: Array2<f64>) -> ScoreMatrix {
        ScoreMatrix { scores: s }
    }

    #[test]
    fn closed_form_values() {
        let ln2 = std::f64::consts::LN_2;
        let l = et_loss(
            &sm(array![[0.0]]),
            &LabelMatrix::unweighted(array![[1.0]]),
            Default::default(),
        )
        .unwrap();
        assert!((l - ln2).abs() < 1e-12);
        let l = et_loss(
            &sm(array![[20.0]]),
            &LabelMatrix::unweighted(array![[1.0]]),
            Default::default(),
        )
        .unwrap();
        assert!(l < 1e-8);
        let half = LabelMatrix {
            y: array![[1.0]],
            w: array![[0.5]],
        };
        let l = et_loss(&sm(array![[0.0]]), &half, Default::default()).unwrap();
        assert!((l - ln2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let l = et_loss(
            &sm(array![[800.0, -800.0]]),
            &LabelMatrix::unweighted(array![[0.0, 1.0]]),
            Default::default(),
        )
        .unwrap();
        assert!((l - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_modes() {
        let s = sm(array![[0.0, 0.0], [0.0, 0.0]]);
        let y = LabelMatrix::unweighted(array![[1.0, 0.0], [0.0, 1.0]]);
        let a = et_loss(&s, &y, EtNormalization::Examples).unwrap();
        let b = et_loss(&s, &y, EtNormalization::ExamplesAndTypes).unwrap();
        assert!((a - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((a - 2.0 * b).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let r = et_loss(
            &sm(array![[0.0, 1.0]]),
            &LabelMatrix::unweighted(array![[1.0]]),
            Default::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn uniform_cross_entropy_is_log_v() {
        let v = 37;
        let l = cross_entropy(&Array2::zeros((1, v)), &[5]);
        assert!((l - (v as f64).ln()).abs() < 1e-12);
        assert_eq!(cross_entropy(&Array2::zeros((0, v)), &[]), 0.0);
        let mut peaked = Array2::zeros((1, v));
        peaked[[0, 3]] = 60.0;
        assert!(cross_entropy(&peaked, &[3]) < 1e-20);
        // Two instances with the same loss average to that loss.
        let two = Array2::zeros((2, v));
        assert!((cross_entropy(&two, &[1, 2]) - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn combined_loss() {
        let b = total_loss(1.0, 2.0, 3.0, LossWeights { mlm: 0.1, nwp: 0.1 }).unwrap();
        assert!((b.total - 1.5).abs() < 1e-12);
        let b = total_loss(0.7, 2.0, 3.0, LossWeights::FINETUNE).unwrap();
        assert_eq!(b.total, 0.7);
        assert_eq!(LossWeights::PRETRAIN, LossWeights { mlm: 0.1, nwp: 0.1 });
        assert!(total_loss(
            1.0,
            1.0,
            1.0,
            LossWeights {
                mlm: -0.1,
                nwp: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn prompt_labels_down_weighted() {
        let mut ex =
            MentionExample::new(vec![], "he", vec![], vec!["person".into(), "victim".into()]);
        ex.label_sources = Some(vec![LabelSource::Kb, LabelSource::Prompt]);
        let labels: Vec<String> = ["person", "victim", "city"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = LabelMatrix::from_examples(&[&ex], &labels, 0.5).unwrap();
        assert_eq!(m.y, array![[1.0, 1.0, 0.0]]);
        assert_eq!(m.w, array![[1.0, 0.5, 1.0]]);
        assert!(LabelMatrix::from_examples(&[&ex], &labels, 0.0).is_err());
    }
}
