//! Minimal INI reader: `[section]` headers, `key = value` lines, `#` or `;`
//! comment lines. Every key must be consumed; leftovers are reported as
//! unknown.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Section {
    pub name: String,
    entries: Vec<(String, String, usize)>,
    used: BTreeSet<String>,
}

#[derive(Clone, Debug)]
pub struct IniDoc {
    pub sections: Vec<Section>,
}

impl IniDoc {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, format!("unterminated section header `{line}`")))?
                    .trim();
                if name.is_empty() {
                    return Err(err(line_no, "empty section name".into()));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(err(line_no, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                    used: BTreeSet::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let section = sections
                .last_mut()
                .ok_or_else(|| err(line_no, format!("key `{key}` outside any section")))?;
            if key.is_empty() {
                return Err(err(line_no, "empty key".into()));
            }
            if section.entries.iter().any(|(k, _, _)| k == key) {
                return Err(err(
                    line_no,
                    format!("duplicate key {}.{key}", section.name),
                ));
            }
            section
                .entries
                .push((key.to_string(), value.to_string(), line_no));
        }
        Ok(Self { sections })
    }

    /// Removes and returns the named section.
    pub fn take_opt(&mut self, name: &str) -> Option<Section> {
        let i = self.sections.iter().position(|s| s.name == name)?;
        Some(self.sections.remove(i))
    }

    /// Like [`IniDoc::take_opt`], with an empty section when absent.
    pub fn take(&mut self, name: &str) -> Section {
        self.take_opt(name).unwrap_or_else(|| Section {
            name: name.to_string(),
            entries: Vec::new(),
            used: BTreeSet::new(),
        })
    }
}

impl Section {
    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    pub fn raw(&mut self, key: &str) -> Option<String> {
        let value = self
            .entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.clone());
        if value.is_some() {
            self.used.insert(key.to_string());
        }
        value
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::config(self.field(key), format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Finite float, defaulting when absent.
    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.get_or(key, default)?;
        if !v.is_finite() {
            return Err(Error::config(
                self.field(key),
                format!("must be finite, got {v}"),
            ));
        }
        Ok(v)
    }

    pub fn require(&mut self, key: &str) -> Result<String> {
        self.raw(key)
            .ok_or_else(|| Error::config(self.field(key), "missing required key"))
    }

    /// Errors on the first key that no getter asked for.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(k, _, _)| !self.used.contains(k)) {
            Some((k, _, line)) => Err(Error::config(
                self.field(k),
                format!("unknown key (line {line})"),
            )),
            None => Ok(()),
        }
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.field(key), message)
    }
}
