//! Flat dotted-key run configuration: defaults, then the `--config` file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Bad invocation: exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    allowed: &'static [&'static str],
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, value: Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other);
        }
    }
}

impl Settings {
    /// Reads `path` if given. Nested objects are flattened to dotted keys;
    /// keys outside `allowed` are rejected.
    pub fn load(path: Option<&Path>, allowed: &'static [&'static str]) -> Result<Self> {
        let mut settings = Self { allowed, values: BTreeMap::new() };
        let Some(path) = path else { return Ok(settings) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let root: Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !root.is_object() {
            return Err(usage(format!("config {} must be a JSON object", path.display())));
        }
        let mut flat = BTreeMap::new();
        flatten("", root, &mut flat);
        for key in flat.keys() {
            settings.check_key(key)?;
        }
        settings.values = flat;
        Ok(settings)
    }

    fn check_key(&self, key: &str) -> Result<()> {
        if self.allowed.contains(&key) {
            Ok(())
        } else {
            Err(usage(format!("unknown config key '{key}' (known: {})", self.allowed.join(", "))))
        }
    }

    /// Flag override; `None` leaves the file value in place.
    pub fn set<T: Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<()> {
        self.check_key(key)?;
        if let Some(v) = flag {
            self.values.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(())
    }

    /// Resolved value, recording `default` when the key is unset.
    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, default: T) -> Result<T> {
        self.check_key(key)?;
        match self.values.get(key) {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| usage(format!("config key '{key}': {e}"))),
            None => {
                self.values.insert(key.to_string(), serde_json::to_value(&default)?);
                Ok(default)
            }
        }
    }

    /// Resolved value of a key without a default; records `null` when unset.
    pub fn get_opt<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>> {
        self.check_key(key)?;
        match self.values.get(key) {
            Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| usage(format!("config key '{key}': {e}"))),
            None => {
                self.values.insert(key.to_string(), Value::Null);
                Ok(None)
            }
        }
    }

    pub fn require<T: DeserializeOwned>(&mut self, key: &str, flag: &str) -> Result<T> {
        self.get_opt(key)?
            .ok_or_else(|| usage(format!("missing {flag} (or config key '{key}')")))
    }

    pub fn resolved(&self) -> &BTreeMap<String, Value> {
        &self.values
    }
}
