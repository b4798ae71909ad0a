//! Flat `key = value` experiment files.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. A `[section]`
//! header prefixes the keys that follow it with `section.`. Relative paths are
//! resolved against the directory holding the file. Command-line flags always
//! win over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "extractor_seed",
    "real",
    "eval",
    "input",
    "checkpoint",
    "out",
    "metric",
    "labels",
    "epochs",
    "batch_size",
    "learning_rate",
    "val_fraction",
    "layers",
    "hidden",
    "scale_clamp",
    "kind",
    "severity",
    "severities",
    "severities.blur",
    "severities.salt_pepper",
    "severities.rect_patch",
    "severities.diffusion",
    "sizes",
    "resamples",
    "count",
    "size",
    "diffusion_steps",
    "beta_start",
    "beta_end",
];

#[derive(Clone, Debug, Default)]
pub struct Config {
    origin: Option<PathBuf>,
    base: PathBuf,
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let values =
            parse(&text).map_err(|msg| CliError::Config(format!("{}: {msg}", path.display())))?;
        Ok(Self {
            origin: Some(path.to_path_buf()),
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            values,
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn bad(&self, key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
        let origin = self
            .origin
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        CliError::Config(format!("{origin}: bad value {value:?} for {key}: {why}"))
    }

    /// The flag value if given, otherwise the parsed file value.
    pub fn value<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.bad(key, v, e)))
            .transpose()
    }

    pub fn list<T>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| item.trim().parse::<T>().map_err(|e| self.bad(key, v, e)))
                    .collect()
            })
            .transpose()
    }

    /// Flag paths are taken as given; file paths are relative to the file.
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(|v| self.base.join(v)))
    }
}

fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut values = BTreeMap::new();
    let mut section = String::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = format!("{}.", name.trim());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", no + 1));
        };
        let key = format!("{section}{}", key.trim());
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key {key:?}", no + 1));
        }
        if values
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(format!("line {}: duplicate key {key:?}", no + 1));
        }
    }
    Ok(values)
}
