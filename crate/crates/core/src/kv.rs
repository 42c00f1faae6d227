//! Flat `key=value` text used by manifests, range files and experiment configs.
//!
//! One entry per line. Blank lines and lines starting with `#` are skipped.
//! Keys may repeat; lookups that need a single value take the last one.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// 1-based source line.
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    pub entries: Vec<Entry>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                key: line.to_string(),
                message: "expected key=value".into(),
            })?;
            entries.push(Entry {
                line: i + 1,
                key: key.trim().to_string(),
                value: value.trim().to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| Error::Config {
            line: 0,
            key: key.to_string(),
            message: "missing required key".into(),
        })
    }

    /// Parses the value of a required key.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.require(key)?.parse()
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key).map(Entry::parse).transpose()
    }
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: Display,
    {
        self.value.parse().map_err(|e: T::Err| self.error(e.to_string()))
    }

    /// Comma-separated list value.
    pub fn parse_list<T: FromStr>(&self) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: T::Err| self.error(format!("`{s}`: {e}"))))
            .collect()
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.clone(),
            message: message.into(),
        }
    }
}

/// Accumulates `key=value` lines.
#[derive(Debug, Default, Clone)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: impl Display, value: impl Display) -> &mut Self {
        use std::fmt::Write;
        let _ = writeln!(self.out, "{key}={value}");
        self
    }

    /// Writes `key[1]=..`, `key[2]=..` with 1-based positions.
    pub fn put_vec<T: Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        for (j, v) in values.iter().enumerate() {
            self.put(format_args!("{key}[{}]", j + 1), v);
        }
        self
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}
