//! Flat `key = value` experiment configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("unknown key `{key}` for subcommand {command}")]
    UnknownKey { key: String, command: &'static str },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Invalid { key: String, value: String, expected: &'static str },
    #[error("{0}")]
    Rejected(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax { line: i + 1, msg: msg.into() };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(syntax("malformed key"));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.into()));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Rejected(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Self { entries: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Inserts or replaces a key.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects the first key not listed in any of `allowed`.
    pub fn check_keys(&self, command: &'static str, allowed: &[&[&str]]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !allowed.iter().any(|group| group.contains(k))) {
            Some(k) => Err(ConfigError::UnknownKey { key: k.into(), command }),
            None => Ok(()),
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.str(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| ConfigError::Invalid {
                    key: key.into(),
                    value: v.into(),
                    expected: short_type_name::<T>(),
                })
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.str(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| ConfigError::Invalid {
                    key: key.into(),
                    value: v.into(),
                    expected: "comma-separated numbers",
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(v) => Err(ConfigError::Invalid { key: key.into(), value: v.into(), expected: "a boolean" }),
        }
    }
}

fn short_type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full)
}
