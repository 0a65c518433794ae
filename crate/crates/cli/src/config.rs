//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Invalid usage or configuration (exit code 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Loads a config file; the name `default` stands for the built-in
    /// defaults (an empty config).
    pub fn load(source: &str) -> Result<Config, UsageError> {
        if source == "default" {
            return Ok(Config::default());
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {source}: {e}")))?;
        Config::parse(&text).map_err(|e| UsageError(format!("{source}: {e}")))
    }

    pub fn parse(text: &str) -> Result<Config, UsageError> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("line {}: expected `key = value`", k + 1));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return usage(format!("line {}: malformed key `{key}`", k + 1));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return usage(format!("line {}: duplicate key `{key}`", k + 1));
            }
        }
        Ok(Config { values })
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), UsageError> {
        for s in sets {
            let Some((k, v)) = s.split_once('=') else {
                return usage(format!("--set expects key=value, got `{s}`"));
            };
            self.values
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), UsageError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => usage(format!("unknown config key `{k}`")),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, UsageError> {
        self.raw(key).map_or(Ok(default), |v| {
            parse_number(v).map_err(|e| UsageError(format!("{key}: {e}")))
        })
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, UsageError> {
        self.raw(key)
            .map(|v| parse_number(v).map_err(|e| UsageError(format!("{key}: {e}"))))
            .transpose()
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, UsageError> {
        self.raw(key).map_or(Ok(default), |v| {
            v.parse()
                .map_err(|_| UsageError(format!("{key}: expected a count, got `{v}`")))
        })
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, UsageError> {
        self.raw(key).map_or(Ok(default), |v| {
            v.parse()
                .map_err(|_| UsageError(format!("{key}: expected an integer, got `{v}`")))
        })
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, UsageError> {
        self.raw(key).map_or(Ok(default.to_vec()), |v| {
            parse_list(v).map_err(|e| UsageError(format!("{key}: {e}")))
        })
    }
}

/// A decimal number or a fraction `a/b`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad number `{s}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

/// `start:step:stop` (inclusive, with a half-step allowance) or a list.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (parse_number(a)?, parse_number(step)?, parse_number(b)?);
            if !(step > 0.0 && b >= a) {
                return Err(format!("bad range `{s}`"));
            }
            let k = ((b - a) / step + 0.5).floor() as usize;
            Ok((0..=k).map(|i| a + step * i as f64).collect())
        }
        [_] => parse_list(s),
        _ => Err(format!("bad range `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let c = Config::parse("# comment\nn = 2\nh = 1/32   # trailing\n\nseed=7\n").unwrap();
        assert_eq!(c.usize_or("n", 1).unwrap(), 2);
        assert_eq!(c.f64_or("h", 0.1).unwrap(), 1.0 / 32.0);
        assert_eq!(c.u64_or("seed", 0).unwrap(), 7);
        assert_eq!(c.f64_or("missing", 0.5).unwrap(), 0.5);
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        assert!(c.check_keys(&["n", "h"]).is_err());
        assert!(c.check_keys(&["n", "h", "seed"]).is_ok());
    }

    #[test]
    fn overrides_win() {
        let mut c = Config::parse("h = 0.1\n").unwrap();
        c.apply_overrides(&["h=0.05".into()]).unwrap();
        assert_eq!(c.f64_or("h", 1.0).unwrap(), 0.05);
        assert!(c.apply_overrides(&["h".into()]).is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0.2:0.2:0.8").unwrap().len(), 4);
        assert_eq!(parse_range("0.1,0.3").unwrap(), vec![0.1, 0.3]);
        assert!(parse_range("1:0:2").is_err());
        assert!(parse_number("x").is_err());
        assert!(parse_number("1/0").is_err());
    }
}
