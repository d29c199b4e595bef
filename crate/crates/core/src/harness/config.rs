//! Flat `key = value` configuration. TOML tables are accepted and flattened to
//! dotted keys, so `[nsp] epsilon = 0.1` and `"nsp.epsilon" = 0.1` are the same.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::{Error, Result};

/// Every key any scenario reads; anything else is rejected.
pub const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "seed",
    "profile",
    "grid.radius",
    "grid.ny",
    "grid.cross_section",
    "grid.height",
    "grid.points",
    "pressure.a",
    "pressure.perturbation",
    "nsp.epsilon",
    "nsp.mu",
    "nsp.mu_exponent",
    "nsp.tau",
    "nsp.nbar",
    "nsp.T_final",
    "nsp.cfl",
    "nsp.output_dt",
    "smoothing.delta",
    "smoothing.width",
    "acoustic.epsilon",
    "acoustic.tau",
    "acoustic.t0",
    "acoustic.t1",
    "acoustic.samples",
    "acoustic.window",
    "acoustic.horizon",
    "acoustic.local_epsilon",
    "limit.kind",
    "limit.mu",
    "limit.tau",
    "limit.T_final",
    "limit.window",
    "limit.max_dt",
    "korn.fields",
    "korn.fraction",
    "korn.ny",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        let mut values = BTreeMap::new();
        flatten("", &Value::Table(table), &mut values);
        for key in values.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => as_f64(key, v),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(type_error(key, "a nonnegative integer", v)),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        self.usize(key, default as usize).map(|v| v as u64)
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String> {
        match self.values.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v @ (Value::Float(_) | Value::Integer(_))) => Ok(as_f64(key, v)?.to_string()),
            Some(v) => Err(type_error(key, "a string", v)),
        }
    }

    /// A scalar or an array of numbers.
    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items.iter().map(|v| as_f64(key, v)).collect(),
            Some(v) => Ok(vec![as_f64(key, v)?]),
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        other => Err(type_error(key, "a number", other)),
    }
}

fn type_error(key: &str, expected: &str, got: &Value) -> Error {
    Error::Config(format!("`{key}` must be {expected}, got `{got}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_flatten_to_dotted_keys() {
        let a = Config::parse("[nsp]\nepsilon = [0.2, 0.1]\ntau = \"inf\"\n").unwrap();
        let b = Config::parse("\"nsp.epsilon\" = [0.2, 0.1]\n\"nsp.tau\" = \"inf\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.f64_list("nsp.epsilon", &[]).unwrap(), vec![0.2, 0.1]);
        assert_eq!(a.f64("nsp.tau", 1.0).unwrap(), f64::INFINITY);
        assert_eq!(a.f64("nsp.nbar", 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_types() {
        assert!(matches!(Config::parse("nsp.bogus = 1"), Err(Error::Config(_))));
        assert!(Config::parse("[nsp]\nbogus = 1").is_err());
        let c = Config::parse("seed = \"x\"").unwrap();
        assert!(c.u64("seed", 0).is_err());
        assert!(Config::parse("not toml ===").is_err());
    }
}
