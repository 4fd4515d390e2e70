//! Deterministic synthetic corpora.
//!
//! Each synthetic type is a space-separated path such as `"person athlete"`.
//! Every example is one (template, filler) pair of one type: the filler is the
//! mention and the template supplies the context, so the gold labels are a
//! function of the context words alone.
//!
//! The free-form view labels an example with each path segment as a phrase
//! (`"person"`, `"athlete"`); the hierarchical view labels it with the path and
//! all its prefixes (`"/person"`, `"/person/athlete"`).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MentionExample;
use crate::error::{Error, Result};
use crate::schema::{SchemaKind, TypeSchema};

pub const MENTION_SLOT: &str = "{m}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticType {
    /// Space-separated type path, e.g. `"organization sports_team"`.
    pub path: String,
    /// Whitespace-tokenized sentences containing [`MENTION_SLOT`] exactly once.
    pub templates: Vec<String>,
    pub fillers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub types: Vec<SyntheticType>,
    #[serde(default = "default_view")]
    pub view: SchemaKind,
}

fn default_view() -> SchemaKind {
    SchemaKind::FreeForm
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.types.len() < 2 {
            return Err(Error::Config("generator needs at least 2 types".into()));
        }
        let mut paths = HashSet::new();
        let mut templates = HashSet::new();
        for t in &self.types {
            let segs = segments(&t.path);
            if segs.is_empty() || segs.iter().any(|s| s.contains('/')) {
                return Err(Error::Config(format!("bad type path {:?}", t.path)));
            }
            if !paths.insert(segs.join(" ")) {
                return Err(Error::Config(format!("duplicate type {:?}", t.path)));
            }
            if t.templates.is_empty() || t.fillers.is_empty() {
                return Err(Error::Config(format!(
                    "type {:?} needs at least one template and one filler",
                    t.path
                )));
            }
            for tpl in &t.templates {
                let words: Vec<&str> = tpl.split_whitespace().collect();
                let slots = words.iter().filter(|w| **w == MENTION_SLOT).count();
                if slots != 1 || words.len() < 2 {
                    return Err(Error::Config(format!(
                        "template {tpl:?} must hold one {MENTION_SLOT} slot and context words"
                    )));
                }
                if !templates.insert(words.join(" ")) {
                    return Err(Error::Config(format!(
                        "template {tpl:?} is used more than once; labels would be ambiguous"
                    )));
                }
            }
            if t.fillers.iter().any(|f| f.trim().is_empty()) {
                return Err(Error::Config(format!(
                    "type {:?} has an empty filler",
                    t.path
                )));
            }
        }
        Ok(())
    }
}

fn segments(path: &str) -> Vec<&str> {
    path.split_whitespace().collect()
}

/// Free-form labels of a type path: each segment with `_` read as a space.
pub fn free_form_labels(path: &str) -> Vec<String> {
    segments(path)
        .iter()
        .map(|s| s.replace('_', " ").to_lowercase())
        .collect()
}

/// Hierarchical labels of a type path: every prefix, root first.
pub fn hierarchical_labels(path: &str) -> Vec<String> {
    let segs = segments(path);
    (1..=segs.len())
        .map(|n| format!("/{}", segs[..n].join("/")))
        .collect()
}

/// Generates every (template, filler) example of every type, shuffled by `seed`.
pub fn generate_synthetic_corpus(
    config: &GeneratorConfig,
    seed: u64,
) -> Result<(Vec<MentionExample>, TypeSchema)> {
    config.validate()?;
    let mut label_order: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    for t in &config.types {
        let labels = match config.view {
            SchemaKind::FreeForm => free_form_labels(&t.path),
            SchemaKind::Hierarchical => hierarchical_labels(&t.path),
        };
        for l in &labels {
            if seen.insert(l.clone()) {
                label_order.push(l.clone());
            }
        }
        for tpl in &t.templates {
            let words: Vec<&str> = tpl.split_whitespace().collect();
            let slot = words.iter().position(|w| *w == MENTION_SLOT).unwrap_or(0);
            let left: Vec<String> = words[..slot].iter().map(|s| s.to_string()).collect();
            let right: Vec<String> = words[slot + 1..].iter().map(|s| s.to_string()).collect();
            for filler in &t.fillers {
                examples.push(MentionExample::new(
                    left.clone(),
                    filler.split_whitespace().collect::<Vec<_>>().join(" "),
                    right.clone(),
                    labels.clone(),
                ));
            }
        }
    }
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (i, ex) in examples.iter_mut().enumerate() {
        ex.id = Some(format!("synth-{i}"));
    }
    let schema = TypeSchema::new(config.view, label_order)?
        .with_multi_label(config.view == SchemaKind::FreeForm);
    Ok((examples, schema))
}
