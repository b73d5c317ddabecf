//! Flat `key = value` experiment configs. `#` starts a comment; blank lines
//! are ignored; every key must be consumed by the command reading the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    path: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| Error::Config {
                path: path.to_string(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key"));
            }
            if entries
                .insert(key.to_string(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(err(&format!("duplicate key `{key}`")));
            }
        }
        Ok(Self {
            path: path.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// An empty config: every command then runs on its defaults.
    pub fn empty() -> Self {
        Self {
            path: "<defaults>".into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Removes and parses `key` when present.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|e| Error::Config {
                path: self.path.clone(),
                line,
                reason: format!("`{key}`: {e}"),
            }),
        }
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some((line, value)) = self.entries.remove(key) else {
            return Ok(None);
        };
        value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| Error::Config {
                    path: self.path.clone(),
                    line,
                    reason: format!("`{key}`: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_keys().next() {
            Some(key) => Err(Error::UnknownConfigKey { path: self.path, key }),
            None => Ok(()),
        }
    }
}

/// `inf`, `+inf` and `none` all mean "no noise".
pub fn parse_snr_db(s: &str) -> std::result::Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "none" => Ok(f64::INFINITY),
        other => other.parse::<f64>().map_err(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_lists() {
        let mut c = Config::parse("# header\nruns = 20  # trailing\n\nname=x\nsnrs = 1, -2.5,3\n", "t.conf").unwrap();
        assert_eq!(c.take::<usize>("runs").unwrap(), Some(20));
        assert_eq!(c.take::<String>("name").unwrap(), Some("x".into()));
        assert_eq!(c.take_list::<f64>("snrs").unwrap(), Some(vec![1.0, -2.5, 3.0]));
        assert_eq!(c.take_or("missing", 7u32).unwrap(), 7);
        c.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut c = Config::parse("runs = 2\nrusn = 3\n", "t.conf").unwrap();
        c.take::<usize>("runs").unwrap();
        match c.finish() {
            Err(Error::UnknownConfigKey { key, .. }) => assert_eq!(key, "rusn"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match Config::parse("a = 1\nnot a pair\n", "t.conf") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(Config::parse("a = 1\na = 2\n", "t.conf").is_err());
        let mut c = Config::parse("runs = many\n", "t.conf").unwrap();
        assert!(matches!(c.take::<usize>("runs"), Err(Error::Config { line: 1, .. })));
    }

    #[test]
    fn snr_spellings() {
        assert_eq!(parse_snr_db("inf"), Ok(f64::INFINITY));
        assert_eq!(parse_snr_db("-12.6"), Ok(-12.6));
        assert!(parse_snr_db("loud").is_err());
    }
}
