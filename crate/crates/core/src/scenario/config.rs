//! Flat `key = value` config files.
//!
//! `#` starts a comment, blank lines are ignored, lists are comma
//! separated and point lists separate points with `;` (`10,0; -8,12`).

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn config_err(msg: String) -> Error {
    Error::Config(msg)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(config_err(format!("line {}: bad key `{k}`", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse_value<V: std::str::FromStr>(key: &str, s: &str) -> Result<V> {
        s.trim()
            .parse()
            .map_err(|_| config_err(format!("`{key}`: cannot parse `{s}`")))
    }

    pub fn get<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.raw(key).map(|s| Self::parse_value(key, s)).transpose()
    }

    pub fn get_list<V: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        self.raw(key)
            .map(|s| {
                s.split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| Self::parse_value(key, t))
                    .collect()
            })
            .transpose()
    }

    pub fn get_points(&self, key: &str) -> Result<Option<Vec<[f64; 2]>>> {
        let Some(s) = self.raw(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for chunk in s.split(';').filter(|c| !c.trim().is_empty()) {
            let xy: Vec<f64> = chunk
                .split(',')
                .map(|t| Self::parse_value(key, t))
                .collect::<Result<_>>()?;
            if xy.len() != 2 {
                return Err(config_err(format!(
                    "`{key}`: points need two coordinates, got `{chunk}`"
                )));
            }
            out.push([xy[0], xy[1]]);
        }
        Ok(Some(out))
    }

    /// Hex SHA-256 of the canonical `key=value` listing.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_points() {
        let c = Config::parse(
            "# grid run\nn_rx = 32  # antennas\nantennas=16, 32,64\n\nscatterers = 10,0; -8,12\n",
        )
        .unwrap();
        assert_eq!(c.get::<usize>("n_rx").unwrap(), Some(32));
        assert_eq!(
            c.get_list::<usize>("antennas").unwrap(),
            Some(vec![16, 32, 64])
        );
        assert_eq!(
            c.get_points("scatterers").unwrap(),
            Some(vec![[10.0, 0.0], [-8.0, 12.0]])
        );
        assert_eq!(c.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(Config::parse("just words"), Err(Error::Config(_))));
        assert!(matches!(
            Config::parse("a = 1\na = 2"),
            Err(Error::Config(_))
        ));
        let c = Config::parse("n = x").unwrap();
        assert!(c.get::<usize>("n").is_err());
    }

    #[test]
    fn digest_ignores_layout() {
        let a = Config::parse("a = 1\nb = 2").unwrap();
        let b = Config::parse("# c\nb=2\n a=1 ").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), Config::parse("a = 1").unwrap().digest());
    }
}
