//! Type schemas and the label → phrase mapping.
//!
//! A free-form schema is a flat vocabulary of type words/phrases. A
//! hierarchical schema is a set of `/`-separated paths closed under the parent
//! relation. Hierarchical labels are scored through a phrase (usually the last
//! path segment), so a single model serves both kinds of schema.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    FreeForm,
    Hierarchical,
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaKind::FreeForm => f.write_str("free_form"),
            SchemaKind::Hierarchical => f.write_str("hierarchical"),
        }
    }
}

impl std::str::FromStr for SchemaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free_form" | "free-form" | "ufet" => Ok(SchemaKind::FreeForm),
            "hierarchical" | "fet" => Ok(SchemaKind::Hierarchical),
            other => Err(Error::Config(format!("unknown schema kind {other:?}"))),
        }
    }
}

/// A validated, ordered label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSchema {
    kind: SchemaKind,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    multi_label: bool,
}

impl TypeSchema {
    pub fn new(kind: SchemaKind, labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::Schema(format!("empty label at position {i}")));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate label {label}")));
            }
        }
        match kind {
            SchemaKind::FreeForm => {
                if let Some(bad) = labels.iter().find(|l| l.starts_with('/')) {
                    return Err(Error::Schema(format!(
                        "free_form label {bad} must not start with '/'"
                    )));
                }
            }
            SchemaKind::Hierarchical => {
                for label in &labels {
                    if !label.starts_with('/') || label.len() < 2 {
                        return Err(Error::Schema(format!(
                            "hierarchical label {label:?} must start with '/'"
                        )));
                    }
                    if let Some(parent) = parent_label(label) {
                        if !index.contains_key(parent) {
                            return Err(Error::Schema(format!("orphan label {label}")));
                        }
                    }
                }
            }
        }
        Ok(Self {
            kind,
            labels,
            index,
            multi_label: true,
        })
    }

    pub fn with_multi_label(mut self, multi_label: bool) -> Self {
        self.multi_label = multi_label;
        self
    }

    pub fn kind(&self) -> SchemaKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn multi_label(&self) -> bool {
        self.multi_label
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Strict ancestors of `label`, nearest first. Empty for free-form schemas.
    pub fn ancestors<'a>(&self, label: &'a str) -> Vec<&'a str> {
        if self.kind != SchemaKind::Hierarchical {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut cur = label;
        while let Some(p) = parent_label(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Labels that are not the parent of any other label.
    pub fn leaves(&self) -> Vec<&str> {
        let parents: HashSet<&str> = self.labels.iter().filter_map(|l| parent_label(l)).collect();
        self.labels
            .iter()
            .map(String::as_str)
            .filter(|l| !parents.contains(l))
            .collect()
    }

    /// Parses schema text: one label per line, `#` comments and blank lines skipped.
    pub fn parse(text: &str, kind: SchemaKind) -> Result<Self> {
        let labels = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self::new(kind, labels)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.labels {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

/// Reads a schema file, one label per line, preserving file order.
pub fn load_schema(path: impl AsRef<Path>, kind: SchemaKind) -> Result<TypeSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TypeSchema::parse(&text, kind)
}

/// The parent path of a hierarchical label (`/a/b` → `/a`), `None` at the root.
pub fn parent_label(label: &str) -> Option<&str> {
    let cut = label.rfind('/')?;
    if cut == 0 {
        None
    } else {
        Some(&label[..cut])
    }
}

/// `a` is `b` or one of its ancestors (path-prefix on segment boundaries).
pub fn is_ancestor_or_self(a: &str, b: &str) -> bool {
    a == b || (b.starts_with(a) && b.as_bytes().get(a.len()) == Some(&b'/'))
}

/// Lowercase and collapse whitespace runs to single spaces.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Maps one label to the phrase the model scores in its place.
///
/// Overrides win. Hierarchical labels otherwise use their final segment with
/// `_` read as a space; free-form labels are only normalized.
pub fn map_label_to_phrase(label: &str, overrides: &BTreeMap<String, String>) -> Result<String> {
    if let Some(p) = overrides.get(label) {
        let p = normalize_phrase(p);
        if p.is_empty() {
            return Err(Error::Mapping(format!("empty override phrase for {label}")));
        }
        return Ok(p);
    }
    let phrase = if label.starts_with('/') {
        let last = label.rsplit('/').next().unwrap_or("");
        normalize_phrase(&last.replace('_', " "))
    } else {
        normalize_phrase(label)
    };
    if phrase.is_empty() {
        return Err(Error::Mapping(format!(
            "label {label:?} has an empty final segment"
        )));
    }
    Ok(phrase)
}

/// Label → phrase table for a schema, in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    entries: Vec<(String, String)>,
    overrides: BTreeMap<String, String>,
}

/// Two or more labels that ended up with the same phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseCollision {
    pub phrase: String,
    pub labels: Vec<String>,
}

impl fmt::Display for PhraseCollision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phrase {:?} shared by {}",
            self.phrase,
            self.labels.join(", ")
        )
    }
}

impl LabelMapping {
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn overrides(&self) -> &BTreeMap<String, String> {
        &self.overrides
    }

    pub fn phrase(&self, label: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| p.as_str())
    }

    /// Phrases aligned with `schema.labels()`; errors on any uncovered label.
    pub fn phrases_for(&self, schema: &TypeSchema) -> Result<Vec<String>> {
        let lookup: HashMap<&str, &str> = self
            .entries
            .iter()
            .map(|(l, p)| (l.as_str(), p.as_str()))
            .collect();
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(schema.len());
        for label in schema.labels() {
            match lookup.get(label.as_str()) {
                Some(p) => out.push((*p).to_owned()),
                None => missing.push(label.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Mapping(format!("no phrase for labels {missing:?}")));
        }
        Ok(out)
    }

    pub fn collisions(&self) -> Vec<PhraseCollision> {
        let mut by_phrase: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (l, p) in &self.entries {
            by_phrase.entry(p).or_default().push(l.clone());
        }
        by_phrase
            .into_iter()
            .filter(|(_, ls)| ls.len() > 1)
            .map(|(p, labels)| PhraseCollision {
                phrase: p.to_owned(),
                labels,
            })
            .collect()
    }

    /// Two-column TSV, one row per label.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (l, p) in &self.entries {
            s.push_str(l);
            s.push('\t');
            s.push_str(p);
            s.push('\n');
        }
        s
    }

    /// Reads a full mapping table written by [`LabelMapping::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let rows = parse_tsv(text)?;
        let mut seen = HashSet::new();
        for (l, _) in &rows {
            if !seen.insert(l.clone()) {
                return Err(Error::Mapping(format!("label {l} mapped twice")));
            }
        }
        Ok(Self {
            entries: rows,
            overrides: BTreeMap::new(),
        })
    }
}

/// Builds the phrase table for every label and reports phrase collisions.
pub fn build_phrase_table(
    schema: &TypeSchema,
    overrides: &BTreeMap<String, String>,
) -> Result<(LabelMapping, Vec<PhraseCollision>)> {
    let entries = schema
        .labels()
        .iter()
        .map(|l| map_label_to_phrase(l, overrides).map(|p| (l.clone(), p)))
        .collect::<Result<Vec<_>>>()?;
    let mapping = LabelMapping {
        entries,
        overrides: overrides.clone(),
    };
    let collisions = mapping.collisions();
    for c in &collisions {
        log::warn!("{c}");
    }
    Ok((mapping, collisions))
}

fn parse_tsv(text: &str) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.splitn(2, '\t');
        let label = cols.next().unwrap_or("").trim();
        let phrase = cols.next().map(str::trim).unwrap_or("");
        if label.is_empty() || phrase.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected two tab-separated columns: label, phrase".into(),
            });
        }
        rows.push((label.to_owned(), normalize_phrase(phrase)));
    }
    Ok(rows)
}

/// Parses an overrides TSV (label, phrase).
pub fn parse_overrides(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (l, p) in parse_tsv(text)? {
        if out.insert(l.clone(), p).is_some() {
            return Err(Error::Mapping(format!("override for {l} given twice")));
        }
    }
    Ok(out)
}

pub fn load_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_overrides(&text)
}
