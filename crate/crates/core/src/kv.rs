//! Line-oriented `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored. Keys must be unique.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_kv(text: &str) -> Result<Vec<KvEntry>> {
    let mut out: Vec<KvEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected `key = value`, found `{trimmed}`"),
            });
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push(KvEntry {
            line,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

impl KvEntry {
    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            message: format!("key `{}`: {}", self.key, message.into()),
        }
    }

    pub fn unknown(&self) -> Error {
        Error::Config {
            line: self.line,
            message: format!("unknown key `{}`", self.key),
        }
    }

    pub fn f64(&self) -> Result<f64> {
        let v: f64 = self
            .value
            .parse()
            .map_err(|_| self.err(format!("expected a number, found `{}`", self.value)))?;
        if !v.is_finite() {
            return Err(self.err("value must be finite"));
        }
        Ok(v)
    }

    pub fn usize(&self) -> Result<usize> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("expected a non-negative integer, found `{}`", self.value)))
    }

    pub fn u64(&self) -> Result<u64> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("expected a non-negative integer, found `{}`", self.value)))
    }

    /// Comma- or whitespace-separated list of integers; empty value is an empty list.
    pub fn usize_list(&self) -> Result<Vec<usize>> {
        self.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.err(format!("expected integer list, found `{}`", self.value)))
            })
            .collect()
    }
}
