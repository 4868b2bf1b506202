//! Line-oriented `key = value` config files with `[section]` headers.
//!
//! Every key must be read by the consumer; anything left over is reported by
//! [`ConfigFile::finish`] as an unknown key.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    BadValue { section: String, key: String, message: String },
    #[error("[{section}] missing required key `{key}`")]
    Missing { section: String, key: String },
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
    consumed: RefCell<BTreeSet<(String, String)>>,
    known_sections: RefCell<BTreeSet<String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                current = name.trim().to_string();
                if current.is_empty() {
                    return Err(ConfigError::Syntax { line: line_no, message: "empty section name".into() });
                }
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: "expected `key = value`".into() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: line_no, message: "empty key".into() });
            }
            let entry = sections.entry(current.clone()).or_default();
            if entry.insert(key.to_string(), (value.trim().to_string(), line_no)).is_some() {
                return Err(ConfigError::Syntax { line: line_no, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { sections, ..Default::default() })
    }

    pub fn section(&self, name: &str) -> Section<'_> {
        self.known_sections.borrow_mut().insert(name.to_string());
        Section { file: self, name: name.to_string() }
    }

    /// Errors on any section or key that was never read.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        let known = self.known_sections.borrow();
        for (section, keys) in &self.sections {
            if !known.contains(section) {
                return Err(ConfigError::UnknownSection(section.clone()));
            }
            for key in keys.keys() {
                if !consumed.contains(&(section.clone(), key.clone())) {
                    return Err(ConfigError::UnknownKey { section: section.clone(), key: key.clone() });
                }
            }
        }
        Ok(())
    }

    /// All entries as (section, key, value), sorted.
    pub fn entries(&self) -> Vec<(String, String, String)> {
        let mut out = Vec::new();
        for (s, keys) in &self.sections {
            for (k, (v, _)) in keys {
                out.push((s.clone(), k.clone(), v.clone()));
            }
        }
        out
    }
}

pub struct Section<'a> {
    file: &'a ConfigFile,
    name: String,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.file.sections.get(&self.name)?.get(key)?;
        self.file.consumed.borrow_mut().insert((self.name.clone(), key.to_string()));
        Some(v.0.as_str())
    }

    fn bad(&self, key: &str, message: String) -> ConfigError {
        ConfigError::BadValue { section: self.name.clone(), key: key.to_string(), message }
    }

    fn parse_one<T: FromStr>(&self, key: &str, s: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        s.trim().parse::<T>().map_err(|e| self.bad(key, format!("`{s}`: {e}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|s| self.parse_one(key, s)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing { section: self.name.clone(), key: key.to_string() })
    }

    /// Comma-separated list; integers may be written in exponent form (e.g. `1e6`).
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(s) = self.raw(key) else { return Ok(None) };
        let items: Vec<T> = s.split(',').map(|p| self.parse_one(key, p)).collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(self.bad(key, "empty list".into()));
        }
        Ok(Some(items))
    }

    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.list(key)?.unwrap_or(default))
    }

    /// Counts accept `1e6`-style notation as long as the value is a whole number.
    pub fn counts_or(&self, key: &str, default: Vec<usize>) -> Result<Vec<usize>, ConfigError> {
        let Some(vals) = self.list::<f64>(key)? else { return Ok(default) };
        vals.into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                    Ok(v as usize)
                } else {
                    Err(self.bad(key, format!("`{v}` is not a nonnegative integer")))
                }
            })
            .collect()
    }

    pub fn count_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        let v = self.counts_or(key, vec![default])?;
        if v.len() != 1 {
            return Err(self.bad(key, "expected a single value".into()));
        }
        Ok(v[0])
    }

    pub fn error(&self, key: &str, message: &str) -> ConfigError {
        self.bad(key, message.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let cfg = ConfigFile::parse("# c\n[run]\nseed = 7\n[grid]\nn = 1e3, 1e4 # trailing\nt = 0.5,2.5e-1\n").unwrap();
        assert_eq!(cfg.section("run").require::<u64>("seed").unwrap(), 7);
        let g = cfg.section("grid");
        assert_eq!(g.counts_or("n", vec![]).unwrap(), vec![1000, 10000]);
        assert_eq!(g.list::<f64>("t").unwrap(), Some(vec![0.5, 0.25]));
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_error() {
        let cfg = ConfigFile::parse("[run]\nseed = 1\nsede = 2\n").unwrap();
        cfg.section("run").get::<u64>("seed").unwrap();
        assert_eq!(cfg.finish(), Err(ConfigError::UnknownKey { section: "run".into(), key: "sede".into() }));
    }

    #[test]
    fn unknown_section_and_syntax() {
        let cfg = ConfigFile::parse("[nope]\n").unwrap();
        assert!(matches!(cfg.finish(), Err(ConfigError::UnknownSection(_))));
        assert!(matches!(ConfigFile::parse("[run\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ConfigFile::parse("x\n"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(ConfigFile::parse("a=1\na=2\n"), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn bad_values() {
        let cfg = ConfigFile::parse("[g]\nn = 1.5\nx = abc\n").unwrap();
        assert!(cfg.section("g").counts_or("n", vec![]).is_err());
        assert!(cfg.section("g").get::<f64>("x").is_err());
        assert!(matches!(cfg.section("g").require::<f64>("y"), Err(ConfigError::Missing { .. })));
    }
}
