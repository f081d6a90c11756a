//! Flag/config-file merging. Values from the config file win over flags;
//! unknown keys anywhere in the file are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

pub const SECTIONS: [&str; 8] = [
    "allocate",
    "region",
    "simulate",
    "train",
    "eval",
    "psnr-sweep",
    "serve",
    "recv",
];

/// A configuration problem; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    sections: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        let seed = match table.remove("seed") {
            None => None,
            Some(toml::Value::Integer(v)) if v >= 0 => Some(v as u64),
            Some(v) => return Err(ConfigError(format!("config key `seed`: expected a nonnegative integer, got {v}"))),
        };
        let out = match table.remove("out") {
            None => None,
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(v) => return Err(ConfigError(format!("config key `out`: expected a string, got {v}"))),
        };
        for (key, value) in &table {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(ConfigError(format!("unknown config key `{key}`")));
            }
            if !value.is_table() {
                return Err(ConfigError(format!("config key `{key}` must be a table")));
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            seed,
            out,
            sections: table,
        })
    }

    /// Overlays the `[section]` table onto the parsed flags.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, section: &str, flags: &T) -> Result<T, ConfigError> {
        let mut table = toml::Table::try_from(flags).map_err(|e| ConfigError(format!("[{section}]: {e}")))?;
        if let Some(toml::Value::Table(overrides)) = self.sections.get(section) {
            for (k, v) in overrides {
                table.insert(k.clone(), v.clone());
            }
        }
        T::deserialize(table).map_err(|e| ConfigError(format!("config section [{section}]: {e}")))
    }
}
