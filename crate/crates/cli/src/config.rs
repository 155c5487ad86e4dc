//! `key = value` config files. Keys are the long flag names without the
//! leading dashes; flags given on the command line win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "lambda-a",
    "ts",
    "eps",
    "beta",
    "kmin",
    "step",
    "resolution-km",
    "tol",
    "workers",
    "out",
    "format",
    "distance",
    "l-min",
    "l-max",
    "l-step",
    "x-min",
    "x-max",
    "points",
    "lambda-min",
    "lambda-max",
    "ts-min",
    "ts-max",
    "r-min",
    "f-min",
    "grid",
    "battery",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key `{key}`", i + 1);
            }
            if values
                .insert(key.clone(), value.trim().to_owned())
                .is_some()
            {
                bail!("line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Flag value if given, else the file's value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key `{key}` = `{v}`: {e}"))
            })
            .transpose()
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| anyhow!("missing required value `--{key}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let cfg = ConfigFile::parse("eps = 0.01\n# comment\nbeta=0.95 # trailing\n").unwrap();
        assert_eq!(cfg.or(None, "eps", 0.0).unwrap(), 0.01);
        assert_eq!(cfg.or(Some(0.05), "eps", 0.0).unwrap(), 0.05);
        assert_eq!(cfg.or(None, "beta", 1.0).unwrap(), 0.95);
        assert_eq!(cfg.or(None, "kmin", 1e-6).unwrap(), 1e-6);
        assert!(cfg.require::<f64>(None, "ts").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("eps 0.1").is_err());
        assert!(ConfigFile::parse("colour = red").is_err());
        assert!(ConfigFile::parse("eps = 1\neps = 2").is_err());
        let cfg = ConfigFile::parse("eps = lots").unwrap();
        assert!(cfg.pick::<f64>(None, "eps").is_err());
    }
}
