//! Flat `key = value` configuration files with dotted keys.
//!
//! ```text
//! # comment
//! sac.batch_size = 512
//! vehicle.m = 0.041
//! ```
//!
//! Later sources override earlier ones: defaults, then a file, then
//! command-line overrides. Keys are kept sorted so a resolved config
//! serializes deterministically.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Config::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    msg: format!("bad key `{key}`"),
                });
            }
            cfg.set(key, value.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    /// Sets `key` only when it is not already present.
    pub fn set_default(&mut self, key: &str, value: impl Into<String>) {
        self.entries
            .entry(key.to_string())
            .or_insert_with(|| value.into());
    }

    /// Overlays every entry of `other` onto `self`.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Validation(format!("config key `{key}` = `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list of floats.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Validation(format!("config key `{key}` = `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Entries under `prefix.` with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Config {
        let dotted = format!("{prefix}.");
        Config {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&dotted).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
