//! Flat sectioned `key = value` text documents.
//!
//! Used for model configs, run configs, synthetic-household configs, run
//! manifests and key-value metric reports. The grammar is one level deep:
//!
//! ```text
//! # comment (also `;`)
//! root_key = value
//!
//! [section.name]
//! key = value
//! ```
//!
//! Keys and values are trimmed. Keys before the first header belong to the
//! unnamed root section. Duplicate sections or duplicate keys within a
//! section are rejected. Serialization writes `key = value` with single
//! spaces and one blank line between sections, preserving insertion order.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Section {
    name: String,
    entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| config_err!("[{}] missing key `{key}`", self.name))?;
        parse_value(&self.name, key, raw)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(raw) => parse_value(&self.name, key, raw),
            None => Ok(default),
        }
    }

    /// Rejects keys outside `allowed`, so typos surface as errors.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(config_err!("[{}] unknown key `{k}`", self.name));
            }
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| config_err!("[{section}] key `{key}`: cannot parse `{raw}`"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvDoc {
    sections: Vec<Section>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        let mut current = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err!("line {}: unterminated section header", lineno + 1))?
                    .trim();
                if name.is_empty()
                    || !name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
                {
                    return Err(config_err!("line {}: bad section name `{name}`", lineno + 1));
                }
                if doc.section(name).is_some() {
                    return Err(config_err!("line {}: duplicate section [{name}]", lineno + 1));
                }
                doc.sections.push(Section::new(name));
                current = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(config_err!("line {}: empty key", lineno + 1));
            }
            let section = doc.section_mut(&current);
            if section.get(key).is_some() {
                return Err(config_err!(
                    "line {}: duplicate key `{key}` in [{current}]",
                    lineno + 1
                ));
            }
            section.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn sections(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter()
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Returns the named section, creating it at the end if absent.
    pub fn section_mut(&mut self, name: &str) -> &mut Section {
        let idx = match self.sections.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                self.sections.push(Section::new(name));
                self.sections.len() - 1
            }
        };
        &mut self.sections[idx]
    }

    /// The section if present, otherwise an empty stand-in.
    pub fn section_or_empty(&self, name: &str) -> Section {
        self.section(name).cloned().unwrap_or_else(|| Section::new(name))
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.sections.iter().any(|s| s.name.starts_with(prefix))
    }
}

impl fmt::Display for KvDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for section in &self.sections {
            if section.name.is_empty() && section.entries.is_empty() {
                continue;
            }
            if !first {
                writeln!(f)?;
            }
            first = false;
            if !section.name.is_empty() {
                writeln!(f, "[{}]", section.name)?;
            }
            for (k, v) in &section.entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_root_keys() {
        let doc = KvDoc::parse(
            "# header\nversion = 1\n\n[model]\nwindow_len = 512\n; note\n[layer.0]\nkernel_size=3\n",
        )
        .unwrap();
        assert_eq!(doc.section("").unwrap().get("version"), Some("1"));
        assert_eq!(doc.section("model").unwrap().require::<usize>("window_len").unwrap(), 512);
        assert_eq!(doc.section("layer.0").unwrap().get("kernel_size"), Some("3"));
    }

    #[test]
    fn round_trips_through_display() {
        let mut doc = KvDoc::new();
        doc.section_mut("a").set("x", 1).set("y", "two");
        doc.section_mut("b.c").set("z", 3.5);
        let text = doc.to_string();
        assert_eq!(text, "[a]\nx = 1\ny = two\n\n[b.c]\nz = 3.5\n");
        assert_eq!(KvDoc::parse(&text).unwrap(), doc);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvDoc::parse("[a]\n[a]\n").is_err());
        assert!(KvDoc::parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(KvDoc::parse("no equals sign\n").is_err());
        assert!(KvDoc::parse("[bad name]\n").is_err());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let doc = KvDoc::parse("[t]\nepochs = 3\nepohcs = 4\n").unwrap();
        let err = doc.section("t").unwrap().check_keys(&["epochs"]).unwrap_err();
        assert!(err.to_string().contains("epohcs"));
    }
}
