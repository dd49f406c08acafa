use std::collections::BTreeMap;
use std::str::FromStr;

use super::HarnessError;

/// Line-oriented `key = value` settings; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::BadConfig {
                    line: i + 1,
                    reason: "expected `key = value`".into(),
                });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(HarnessError::BadConfig {
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), (i + 1, v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.parse().map(Some).map_err(|_| HarnessError::BadConfig {
            line: *line,
            reason: format!("cannot parse `{v}` for {key}"),
        })
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, HarnessError> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| HarnessError::BadConfig {
                    line: *line,
                    reason: format!("cannot parse `{s}` in {key}"),
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}
