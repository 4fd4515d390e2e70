//! Set-based typing metrics.
//!
//! UFET: macro precision averages `|pred ∩ gold| / |pred|` over examples that
//! have at least one prediction, macro recall averages `|pred ∩ gold| / |gold|`
//! over all examples, and F1 is their harmonic mean.
//!
//! FET: strict accuracy is exact set match, micro scores pool the counts, and
//! macro-F1 is the mean of per-example F1 `2|∩| / (|pred| + |gold|)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FetMetrics {
    pub strict_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn as_set<S: AsRef<str>>(labels: &[S]) -> HashSet<&str> {
    labels.iter().map(AsRef::as_ref).collect()
}

fn check<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} gold examples",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Input("no examples to score".into()));
    }
    if let Some(i) = golds.iter().position(|g| g.is_empty()) {
        return Err(Error::Input(format!("gold label set {i} is empty")));
    }
    Ok(())
}

pub fn ufet_macro_prf<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<MacroPrf> {
    check(preds, golds)?;
    let mut p_sum = 0.0;
    let mut p_n = 0usize;
    let mut r_sum = 0.0;
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (as_set(p), as_set(g));
        let hit = p.intersection(&g).count() as f64;
        if !p.is_empty() {
            p_sum += hit / p.len() as f64;
            p_n += 1;
        }
        r_sum += hit / g.len() as f64;
    }
    let precision = if p_n == 0 { 0.0 } else { p_sum / p_n as f64 };
    let recall = r_sum / golds.len() as f64;
    Ok(MacroPrf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

pub fn fet_metrics<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<FetMetrics> {
    check(preds, golds)?;
    let mut exact = 0usize;
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    let mut f1_sum = 0.0;
    for (p, g) in preds.iter().zip(golds) {
        let (p, g) = (as_set(p), as_set(g));
        let hit = p.intersection(&g).count();
        if p == g {
            exact += 1;
        }
        tp += hit;
        n_pred += p.len();
        n_gold += g.len();
        f1_sum += 2.0 * hit as f64 / (p.len() + g.len()) as f64;
    }
    let n = golds.len() as f64;
    let micro_precision = if n_pred == 0 {
        0.0
    } else {
        tp as f64 / n_pred as f64
    };
    let micro_recall = tp as f64 / n_gold as f64;
    Ok(FetMetrics {
        strict_accuracy: exact as f64 / n,
        micro_precision,
        micro_recall,
        micro_f1: harmonic(micro_precision, micro_recall),
        macro_f1: f1_sum / n,
    })
}
