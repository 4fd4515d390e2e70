//! Flat dotted-key configuration.
//!
//! Every command starts from a default document, flattens it into
//! `namespace.field` keys, then applies the config file and the command-line
//! `key=value` overrides in order. Each override is type-checked by
//! deserializing the whole document right after it is applied, so a failure
//! always names the key that caused it.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

pub type Flat = BTreeMap<String, Value>;

type Check = Box<dyn Fn(&Value) -> Result<()>>;

pub fn flatten(prefix: &str, value: &Value, out: &mut Flat) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_owned(), other.clone());
        }
    }
}

pub fn unflatten(flat: &Flat) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_owned(), value.clone());
            } else {
                node = node
                    .entry(part)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("dotted keys never collide with leaves");
            }
        }
    }
    Value::Object(root)
}

/// Command-line values are JSON when they parse as JSON, strings otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), parse_value(v))),
        _ => bail!("override {arg:?} is not of the form key=value"),
    }
}

/// Reads a config file. A resolved-config snapshot (with a `config` object)
/// is accepted too, so any run can be repeated from its snapshot.
pub fn read_config_file(path: &Path) -> Result<Flat> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("config {} is not valid JSON", path.display()))?;
    let body = match value.get("config") {
        Some(inner) if inner.is_object() => inner.clone(),
        _ => value,
    };
    let Value::Object(map) = body else {
        bail!("config {} must be a JSON object", path.display());
    };
    let mut flat = Flat::new();
    for (k, v) in map {
        // Nested objects are accepted and flattened like dotted keys.
        flatten(&k, &v, &mut flat);
    }
    Ok(flat)
}

/// Defaults plus overrides, validated key by key.
pub struct Resolver {
    flat: Flat,
    check: Check,
}

impl Resolver {
    pub fn new(defaults: Flat, check: impl Fn(&Value) -> Result<()> + 'static) -> Self {
        Self {
            flat: defaults,
            check: Box::new(check),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let Some(slot) = self.flat.get_mut(key) else {
            bail!("unknown config key {key:?}");
        };
        let old = std::mem::replace(slot, value);
        if let Err(e) = (self.check)(&unflatten(&self.flat)) {
            self.flat.insert(key.to_owned(), old);
            bail!("invalid value for config key {key:?}: {e:#}");
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: impl IntoIterator<Item = (String, Value)>) -> Result<()> {
        for (k, v) in entries {
            self.set(&k, v)?;
        }
        Ok(())
    }

    pub fn flat(&self) -> &Flat {
        &self.flat
    }
}

/// Default document for a set of named sections.
pub fn defaults(sections: &[(&str, Value)]) -> Flat {
    let mut flat = Flat::new();
    for (name, value) in sections {
        flatten(name, value, &mut flat);
    }
    flat
}

/// Deserializes one section of a resolved document.
pub fn section_check<T: DeserializeOwned>(doc: &Value, name: &str) -> Result<T> {
    let part = doc.get(name).cloned().unwrap_or(Value::Object(Map::new()));
    serde_json::from_value(part).map_err(|e| anyhow::anyhow!("{e}"))
}
