//! Flat dotted-key configuration text (`omega.str = 0.05`).
//!
//! Files are parsed as TOML and flattened, so `[omega]` tables and dotted
//! keys are interchangeable. Callers take the keys they know and then reject
//! whatever is left.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: expected {expected}")]
    BadValue { key: String, expected: &'static str },
}

pub type FlatConfig = BTreeMap<String, toml::Value>;

fn flatten(prefix: &str, table: toml::Table, out: &mut FlatConfig) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

pub fn parse_flat(text: &str) -> Result<FlatConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut out = FlatConfig::new();
    flatten("", table, &mut out);
    Ok(out)
}

pub fn take_f64(map: &mut FlatConfig, key: &str) -> Result<f64, ConfigError> {
    take_opt_f64(map, key)?.ok_or_else(|| ConfigError::MissingKey(key.to_string()))
}

pub fn take_opt_f64(map: &mut FlatConfig, key: &str) -> Result<Option<f64>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(f)),
        Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
        Some(_) => Err(ConfigError::BadValue { key: key.to_string(), expected: "a number" }),
    }
}

pub fn take_opt_usize(map: &mut FlatConfig, key: &str) -> Result<Option<usize>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
        Some(_) => Err(ConfigError::BadValue { key: key.to_string(), expected: "a non-negative integer" }),
    }
}

pub fn take_opt_bool(map: &mut FlatConfig, key: &str) -> Result<Option<bool>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(toml::Value::Boolean(b)) => Ok(Some(b)),
        Some(_) => Err(ConfigError::BadValue { key: key.to_string(), expected: "true or false" }),
    }
}

pub fn take_opt_string(map: &mut FlatConfig, key: &str) -> Result<Option<String>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ConfigError::BadValue { key: key.to_string(), expected: "a string" }),
    }
}

pub fn reject_unknown(map: &FlatConfig) -> Result<(), ConfigError> {
    match map.keys().next() {
        Some(k) => Err(ConfigError::UnknownKey(k.clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = parse_flat("omega.str = 0.05\nv.stop = 1\n").unwrap();
        let b = parse_flat("[omega]\nstr = 0.05\n[v]\nstop = 1\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn take_and_reject() {
        let mut m = parse_flat("x.a = 1\nx.b = true\nx.c = \"s\"\n# comment\nx.d = 2.5").unwrap();
        assert_eq!(take_f64(&mut m, "x.a").unwrap(), 1.0);
        assert_eq!(take_opt_bool(&mut m, "x.b").unwrap(), Some(true));
        assert_eq!(take_opt_string(&mut m, "x.c").unwrap().as_deref(), Some("s"));
        assert!(matches!(reject_unknown(&m), Err(ConfigError::UnknownKey(k)) if k == "x.d"));
        assert!(matches!(take_f64(&mut m, "missing"), Err(ConfigError::MissingKey(_))));
        assert!(parse_flat("= nope").is_err());
    }
}
