//! `key = value` text records with `#` comments.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

/// Parses a record; later duplicate keys are an error.
pub fn parse_record(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CoreError::Argument(format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(CoreError::Argument(format!("line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(out)
}
