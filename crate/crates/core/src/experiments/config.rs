//! Experiment parameters resolved from command-line flags, an optional
//! `key = value` file, and built-in defaults, in that order of precedence.
//!
//! Every resolved value is recorded so output files can embed the exact
//! configuration that produced them.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    file: BTreeMap<String, String>,
    used: Vec<String>,
    resolved: Vec<(String, String)>,
}

fn normalise(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are ignored; keys may use `-` or `_`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected 'key = value'".into(),
            })?;
            file.insert(normalise(k), v.trim().to_string());
        }
        Ok(ExperimentConfig {
            file,
            ..Self::default()
        })
    }

    fn lookup<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        match (flag, self.file.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(raw)) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::domain(format!("config key '{key}': cannot parse '{raw}'"))),
            (None, None) => Ok(None),
        }
    }

    fn accept<T: Display>(&mut self, key: &str, value: T) -> T {
        self.used.push(key.to_string());
        self.record(key, &value);
        value
    }

    /// The flag if given, else the file entry, else `default`.
    pub fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
    {
        let value = self.lookup(key, flag)?.unwrap_or(default);
        Ok(self.accept(key, value))
    }

    /// Like [`resolve`](Self::resolve) for settings without a default.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
    {
        let value = self
            .lookup(key, flag)?
            .ok_or_else(|| Error::domain(format!("missing required setting '--{key}'")))?;
        Ok(self.accept(key, value))
    }

    /// Records a derived value in the output header.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// File keys that no resolution consumed.
    pub fn unused_keys(&self) -> Vec<String> {
        self.file
            .keys()
            .filter(|k| !self.used.contains(k))
            .cloned()
            .collect()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// `# key=value` lines for every resolved entry.
    pub fn header(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::domain(format!("cannot parse list entry '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let mut cfg = ExperimentConfig::parse("# comment\nalpha = 0.3\nlr_start=0.5\n\nseed = 4", Path::new("c")).unwrap();
        assert_eq!(cfg.resolve("alpha", Some(0.2), 0.01).unwrap(), 0.2);
        assert_eq!(cfg.resolve("lr-start", None, 1.0).unwrap(), 0.5);
        assert_eq!(cfg.resolve("epochs", None, 30usize).unwrap(), 30);
        assert_eq!(cfg.unused_keys(), vec!["seed".to_string()]);
        assert_eq!(cfg.header(), "# alpha=0.2\n# lr-start=0.5\n# epochs=30\n");
    }

    #[test]
    fn required_values() {
        let mut cfg = ExperimentConfig::parse("data = a.csv", Path::new("c")).unwrap();
        assert_eq!(cfg.require::<String>("data", None).unwrap(), "a.csv");
        assert_eq!(cfg.require("out", Some("b".to_string())).unwrap(), "b");
        assert!(cfg.require::<String>("model", None).is_err());
    }

    #[test]
    fn bad_lines_and_values() {
        assert!(matches!(
            ExperimentConfig::parse("alpha 0.3", Path::new("c")),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut cfg = ExperimentConfig::parse("epochs = many", Path::new("c")).unwrap();
        assert!(cfg.resolve("epochs", None, 3usize).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0.1, 0.2,0.5").unwrap(), vec![0.1, 0.2, 0.5]);
        assert!(parse_list::<usize>("").unwrap().is_empty());
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
