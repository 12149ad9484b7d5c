//! Flat `key = value` configuration files and run manifests.
//!
//! Config files carry default-overriding settings: one `key = value` per
//! line, `#` comments, blank lines ignored. Run manifests use the same
//! syntax to record everything needed to reproduce a run — tool version,
//! effective settings, and SHA-256 digests of inputs and outputs — in a
//! deterministic order, so re-running a manifest can be verified by
//! comparing digests alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Manifest keys excluded from replay comparison because they legitimately
/// differ between runs: wall-clock timing and the output directory (replays
/// write into a scratch directory).
pub const VOLATILE_KEYS: &[&str] = &["elapsed_ms", "arg.out"];

fn split_line(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses flat config text into a sorted map. Rejects malformed lines and
/// duplicate keys with line-number context.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = split_line(line) else {
            return Err(Error::invalid(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        if k.is_empty() {
            return Err(Error::invalid(format!("config line {}: empty key", lineno + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::invalid(format!(
                "config line {}: duplicate key {k:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Reads and parses a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e.to_string()))?;
    parse_config(&text).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::format(path, msg),
        other => other,
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e.to_string()))?;
    Ok(sha256_hex(&bytes))
}

/// Ordered record of one run: settings, input digests, output digests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a key; keys are written in insertion order and must be
    /// unique.
    pub fn set(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        let key = key.into();
        debug_assert!(
            self.get(&key).is_none(),
            "manifest key {key:?} set twice"
        );
        self.entries.push((key, value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records `path`'s digest under `<kind>.<name>`.
    pub fn set_file_digest(
        &mut self,
        kind: &str,
        name: &str,
        path: impl AsRef<Path>,
    ) -> Result<()> {
        let digest = sha256_file(&path)?;
        self.set(format!("{kind}.{name}"), digest);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push_str(" = ");
            text.push_str(v);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e.to_string()))?;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = split_line(line) else {
                return Err(Error::format(
                    path,
                    format!("manifest line {}: expected `key = value`", lineno + 1),
                ));
            };
            if entries.iter().any(|(ek, _): &(String, String)| ek == k) {
                return Err(Error::format(
                    path,
                    format!("manifest line {}: duplicate key {k:?}", lineno + 1),
                ));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    /// Keys that differ between two manifests, ignoring [`VOLATILE_KEYS`].
    /// A key present on one side only also counts as differing.
    pub fn diff(&self, other: &RunManifest) -> Vec<String> {
        let mut keys: Vec<&str> = self
            .entries
            .iter()
            .chain(&other.entries)
            .map(|(k, _)| k.as_str())
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .filter(|k| !VOLATILE_KEYS.contains(k))
            .filter(|k| self.get(k) != other.get(k))
            .map(String::from)
            .collect()
    }
}
