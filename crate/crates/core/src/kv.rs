//! Plain-text `key = value` configuration files.
//!
//! ```text
//! # comment
//! include base.cfg        # path relative to the including file
//! layers = 2
//! visual.hidden = 32
//! ```
//!
//! Later assignments override earlier ones, so an include followed by
//! overrides works as expected.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<Entry>,
}

fn parse_err(location: String, message: impl Into<String>) -> Error {
    Error::Parse { location, message: message.into() }
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-')
}

impl KvDoc {
    /// Parses text; `include` directives are resolved through `resolve`.
    pub fn parse_with<R>(text: &str, origin: &str, resolve: &mut R) -> Result<Self>
    where
        R: FnMut(&str, usize) -> Result<KvDoc>,
    {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let location = format!("{origin}:{}", i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include") {
                if rest.starts_with(char::is_whitespace) && !rest.contains('=') {
                    let target = rest.trim();
                    if target.is_empty() {
                        return Err(parse_err(location, "include needs a path"));
                    }
                    let doc = resolve(target, i + 1).map_err(|e| match e {
                        Error::Parse { .. } => e,
                        other => parse_err(location.clone(), format!("include `{target}`: {other}")),
                    })?;
                    entries.extend(doc.entries);
                    continue;
                }
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(location.clone(), format!("expected `key = value`, got `{line}`")))?;
            let key = k.trim();
            if !valid_key(key) {
                return Err(parse_err(location, format!("invalid key `{key}`")));
            }
            entries.push(Entry { key: key.to_string(), value: v.trim().to_string(), location });
        }
        Ok(KvDoc { entries })
    }

    /// Parses text that may not contain includes.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        Self::parse_with(text, origin, &mut |target, _| {
            Err(Error::Config(format!("include `{target}` is not allowed here")))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_depth(path, 0)
    }

    fn load_depth(path: &Path, depth: usize) -> Result<Self> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!("include depth exceeds {MAX_INCLUDE_DEPTH} at {}", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with(&text, &path.display().to_string(), &mut |target, _| {
            Self::load_depth(&base.join(target), depth + 1)
        })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push(Entry { key: key.to_string(), value: value.into(), location: "<override>".into() });
    }

    /// Last assignment of `key`.
    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    /// Parses the value of `key` if present.
    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| parse_err(e.location.clone(), format!("{key}: {err}"))),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(key) else { return Ok(None) };
        if e.value.trim().is_empty() || e.value.trim() == "none" {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|s| s.trim().parse().map_err(|err| parse_err(e.location.clone(), format!("{key}: {err}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Keys under `prefix.` with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvDoc {
        let p = format!("{prefix}.");
        KvDoc {
            entries: self
                .entries
                .iter()
                .filter_map(|e| {
                    e.key.strip_prefix(&p).map(|k| Entry { key: k.to_string(), value: e.value.clone(), location: e.location.clone() })
                })
                .collect(),
        }
    }

    /// Everything outside the `prefix.` section.
    pub fn without_section(&self, prefix: &str) -> KvDoc {
        let p = format!("{prefix}.");
        KvDoc { entries: self.entries.iter().filter(|e| !e.key.starts_with(&p)).cloned().collect() }
    }

    /// Fails on any key not in `known` (section keys match by prefix).
    pub fn reject_unknown(&self, known: &[&str], sections: &[&str]) -> Result<()> {
        for e in &self.entries {
            let in_section = sections.iter().any(|s| e.key.starts_with(&format!("{s}.")));
            if !in_section && !known.contains(&e.key.as_str()) {
                return Err(parse_err(e.location.clone(), format!("unknown key `{}`", e.key)));
            }
        }
        Ok(())
    }
}
