//! Loading config files and `--set key=value` overrides.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use selda_core::config::{self, ConfigError};
use selda_core::{ConfigSet, LegConfig};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reads a config file, or starts from the built-in defaults of `leg` when
/// `path` is `None`, then applies overrides and validates.
pub fn load(path: Option<&Path>, leg: LegConfig, overrides: &[String]) -> Result<ConfigSet> {
    let mut set = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                ErrorKind::NotFound => Error::ConfigNotFound(p.to_path_buf()),
                _ => Error::io(p, e),
            })?;
            config::parse_unvalidated(&text)
                .map_err(|source| Error::Config { origin: p.display().to_string(), source })?
        }
        None => ConfigSet::defaults(leg),
    };
    apply_overrides(&mut set, overrides)?;
    set.validate().map_err(|source| Error::Config {
        origin: path.map_or_else(|| "config".to_string(), |p| p.display().to_string()),
        source,
    })?;
    Ok(set)
}

pub fn apply_overrides(set: &mut ConfigSet, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| Error::Config {
            origin: "--set".into(),
            source: ConfigError::Parse { line: 0, message: format!("expected key=value, got `{item}`") },
        })?;
        config::apply(set, key.trim(), value.trim())
            .map_err(|source| Error::Config { origin: "--set".into(), source })?;
    }
    Ok(())
}

/// SHA-256 of the canonical serialization, hex encoded. Two configs share a
/// hash exactly when every field is bit-identical.
pub fn config_hash(set: &ConfigSet) -> String {
    hex::encode(Sha256::digest(config::serialize(set).as_bytes()))
}
