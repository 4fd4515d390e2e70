//! Annotated mention corpora: JSON-lines I/O, few-shot splits, test-set
//! filtering and a synthetic corpus generator.

mod fewshot;
pub mod synth;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{is_ancestor_or_self, TypeSchema};

pub use fewshot::{sample_fewshot, FewShotOptions, FewShotSplit};
pub use synth::{
    free_form_labels, generate_synthetic_corpus, hierarchical_labels, GeneratorConfig,
    SyntheticType, MENTION_SLOT,
};

/// Where a weak label came from. Prompt-generated labels are down-weighted in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Kb,
    Head,
    Prompt,
}

/// One entity mention in context, in the field layout of the public UFET release.
///
/// `labels` keeps file order (duplicates are rejected) so that a read/write
/// round trip is byte-exact. `label_sources`, when present, is parallel to
/// `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "left_context_token", default)]
    pub left_context: Vec<String>,
    #[serde(rename = "word")]
    pub mention: String,
    #[serde(rename = "right_context_token", default)]
    pub right_context: Vec<String>,
    #[serde(rename = "y_str", default)]
    pub labels: Vec<String>,
    #[serde(rename = "label_src", default, skip_serializing_if = "Option::is_none")]
    pub label_sources: Option<Vec<LabelSource>>,
}

impl MentionExample {
    pub fn new(
        left_context: Vec<String>,
        mention: impl Into<String>,
        right_context: Vec<String>,
        labels: Vec<String>,
    ) -> Self {
        Self {
            id: None,
            left_context,
            mention: mention.into(),
            right_context,
            labels,
            label_sources: None,
        }
    }

    pub fn mention_words(&self) -> impl Iterator<Item = &str> {
        self.mention.split_whitespace()
    }

    pub fn source_of(&self, label: &str) -> Option<LabelSource> {
        let pos = self.labels.iter().position(|l| l == label)?;
        self.label_sources.as_ref().map(|s| s[pos])
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Checks the structural invariants and label membership in `schema`.
    pub fn validate(&self, schema: &TypeSchema) -> std::result::Result<(), String> {
        if self.mention.trim().is_empty() {
            return Err("empty mention".into());
        }
        if self.labels.is_empty() {
            return Err("example has no labels".into());
        }
        for (i, l) in self.labels.iter().enumerate() {
            if !schema.contains(l) {
                return Err(format!("label {l:?} not in schema"));
            }
            if self.labels[..i].contains(l) {
                return Err(format!("label {l:?} repeated"));
            }
        }
        if let Some(src) = &self.label_sources {
            if src.len() != self.labels.len() {
                return Err(format!(
                    "label_src has {} entries for {} labels",
                    src.len(),
                    self.labels.len()
                ));
            }
        }
        Ok(())
    }
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_examples(text: &str, schema: &TypeSchema) -> Result<Vec<MentionExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        push_line(&mut out, line, i + 1, schema)?;
    }
    Ok(out)
}

pub fn read_examples(path: impl AsRef<Path>, schema: &TypeSchema) -> Result<Vec<MentionExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        push_line(&mut out, &line, i + 1, schema)?;
    }
    Ok(out)
}

/// Reads JSON-lines examples without checking labels against a schema, for
/// unlabeled inputs and vocabulary text.
pub fn read_raw_examples(path: impl AsRef<Path>) -> Result<Vec<MentionExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: MentionExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.mention.trim().is_empty() {
            return Err(Error::Validation {
                line: i + 1,
                message: "empty mention".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

fn push_line(
    out: &mut Vec<MentionExample>,
    line: &str,
    line_no: usize,
    schema: &TypeSchema,
) -> Result<()> {
    if line.trim().is_empty() {
        return Ok(());
    }
    let ex: MentionExample = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    ex.validate(schema).map_err(|message| Error::Validation {
        line: line_no,
        message,
    })?;
    out.push(ex);
    Ok(())
}

pub fn examples_to_jsonl(examples: &[MentionExample]) -> String {
    let mut s = String::new();
    for ex in examples {
        // Serializing plain strings and vectors cannot fail.
        s.push_str(&serde_json::to_string(ex).expect("serializable example"));
        s.push('\n');
    }
    s
}

pub fn write_examples(path: impl AsRef<Path>, examples: &[MentionExample]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(examples_to_jsonl(examples).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Keeps examples whose labels all lie on one root-to-node path.
pub fn filter_single_path(
    examples: &[MentionExample],
    _schema: &TypeSchema,
) -> Vec<MentionExample> {
    examples
        .iter()
        .filter(|ex| is_single_path(&ex.labels))
        .cloned()
        .collect()
}

pub fn is_single_path(labels: &[String]) -> bool {
    labels.iter().enumerate().all(|(i, a)| {
        labels[i + 1..]
            .iter()
            .all(|b| is_ancestor_or_self(a, b) || is_ancestor_or_self(b, a))
    })
}
