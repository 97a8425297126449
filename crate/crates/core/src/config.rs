//! Flat `key = value` configuration text with `[section]` headers.
//!
//! ```text
//! # CIR density on a coarser grid
//! preset = cir-fig2
//!
//! [engine]
//! y_intervals = 500
//! ```
//!
//! Keys outside any section address top-level fields of a pipeline;
//! `[name]` addresses the nested block of that name. Values are numbers,
//! booleans, comma-separated number lists or bare strings.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: Option<String>,
    pub key: String,
    pub value: Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub entries: Vec<Entry>,
}

fn parse_value(raw: &str) -> Value {
    if let Ok(v) = raw.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(v) {
            // keep integers integral so they deserialize into usize fields
            if v.fract() == 0.0 && v.abs() < 9e15 && !raw.contains(['.', 'e', 'E']) {
                return Value::from(v as i64);
            }
            return Value::Number(n);
        }
    }
    match raw {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    if raw.contains(',') {
        let parts: Vec<Value> = raw.split(',').map(|p| parse_value(p.trim())).collect();
        if parts.iter().all(Value::is_number) {
            return Value::Array(parts);
        }
    }
    Value::String(raw.to_string())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config { line, message: format!("unterminated section header `{body}`") })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(Error::Config { line, message: format!("bad section name `{name}`") });
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config { line, message: format!("expected `key = value`, got `{body}`") })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config { line, message: "empty key or value".into() });
            }
            if entries.iter().any(|e: &Entry| e.section == section && e.key == k) {
                return Err(Error::Config { line, message: format!("duplicate key `{k}`") });
            }
            entries.push(Entry { line, section: section.clone(), key: k.to_string(), value: parse_value(v) });
        }
        Ok(Config { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    /// A top-level string value such as `preset`.
    pub fn top_str(&self, key: &str) -> Option<(usize, String)> {
        self.entries.iter().find(|e| e.section.is_none() && e.key == key).and_then(|e| match &e.value {
            Value::String(s) => Some((e.line, s.clone())),
            other => Some((e.line, other.to_string())),
        })
    }

    /// Overlays every entry (except the keys in `skip`) onto `base`.
    ///
    /// Each key must already exist in `base`, except inside a block whose
    /// tag key (`model`) was just replaced. Outside such blocks every
    /// intermediate result must still deserialize, so a bad line is
    /// reported by number.
    pub fn apply<T: Serialize + DeserializeOwned>(&self, base: &T, skip: &[&str]) -> Result<T> {
        let mut doc = serde_json::to_value(base)?;
        let mut retagged: Vec<String> = Vec::new();
        for e in &self.entries {
            if e.section.is_none() && skip.contains(&e.key.as_str()) {
                continue;
            }
            let target: &mut Map<String, Value> = match &e.section {
                None => doc.as_object_mut().expect("pipelines serialize to objects"),
                Some(s) => match doc.get_mut(s).and_then(Value::as_object_mut) {
                    Some(m) => m,
                    None => return Err(Error::Config { line: e.line, message: format!("unknown section [{s}]") }),
                },
            };
            let tag_switch = e.key == "model" && e.section.as_deref() == Some("model");
            if tag_switch {
                target.clear();
                retagged.push("model".into());
            } else if !target.contains_key(&e.key) && !e.section.as_ref().is_some_and(|s| retagged.contains(s)) {
                let place = e.section.as_ref().map(|s| format!(" in [{s}]")).unwrap_or_default();
                return Err(Error::Config { line: e.line, message: format!("unknown key `{}`{place}", e.key) });
            }
            target.insert(e.key.clone(), e.value.clone());
            // a retagged block is only complete once all its keys are in
            if !e.section.as_ref().is_some_and(|s| retagged.contains(s)) {
                serde_json::from_value::<T>(doc.clone())
                    .map_err(|err| Error::Config { line: e.line, message: format!("`{}`: {err}", e.key) })?;
            }
        }
        serde_json::from_value(doc).map_err(|err| Error::Config { line: self.entries.last().map_or(0, |e| e.line), message: err.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Inner {
        a: f64,
        n: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Outer {
        name: String,
        inner: Inner,
        list: Vec<f64>,
    }

    fn base() -> Outer {
        Outer { name: "x".into(), inner: Inner { a: 1.0, n: 3 }, list: vec![1.0] }
    }

    #[test]
    fn overrides_apply() {
        let c = Config::parse("name = y # comment\n\n[inner]\na = 2.5\nn = 7\n[]").unwrap_err();
        assert!(matches!(c, Error::Config { line: 6, .. }));
        let c = Config::parse("name = y\nlist = 0.9, 1, 1.05\n[inner]\na = 2.5\nn = 7\n").unwrap();
        let o = c.apply(&base(), &[]).unwrap();
        assert_eq!(o, Outer { name: "y".into(), inner: Inner { a: 2.5, n: 7 }, list: vec![0.9, 1.0, 1.05] });
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_type = Config::parse("[inner]\n\nn = many\n").unwrap();
        assert!(matches!(bad_type.apply(&base(), &[]), Err(Error::Config { line: 3, .. })));
        let unknown = Config::parse("name = y\nfoo = 1\n").unwrap();
        assert!(matches!(unknown.apply(&base(), &[]), Err(Error::Config { line: 2, .. })));
        let section = Config::parse("[nope]\na = 1\n").unwrap();
        assert!(matches!(section.apply(&base(), &[]), Err(Error::Config { line: 2, .. })));
        assert!(matches!(Config::parse("a = 1\njunk\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(Config::parse("a = 1\na = 2\n"), Err(Error::Config { line: 2, .. })));
    }
}
