//! Layered settings: built-in defaults, then the `--config` file, then flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use terrafill::config::KeyValues;

use crate::error::{CliError, Result};

pub struct Settings {
    kv: KeyValues,
}

impl Settings {
    /// `defaults` lists every accepted key; a config file naming any other
    /// key is rejected.
    pub fn resolve(defaults: KeyValues, file: Option<&Path>, flags: KeyValues) -> Result<Self> {
        let mut kv = defaults;
        if let Some(path) = file {
            let from_file = KeyValues::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if let Some(k) = from_file.keys().find(|k| kv.get_str(k).is_none()) {
                return Err(CliError::Data(format!("{}: unknown key `{k}`", path.display())));
            }
            kv.merge(&from_file);
        }
        kv.merge(&flags);
        Ok(Self { kv })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        Ok(self.kv.require(key)?)
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        Ok(self.kv.get_list(key)?.unwrap_or_default())
    }

    /// Empty values mean "not set".
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.kv.get_str(key) {
            None | Some("") => Ok(None),
            Some(_) => Ok(self.kv.get(key)?),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.kv.get_str(key).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn print(&self, command: &str) {
        eprintln!("# resolved configuration for `{command}`");
        eprint!("{}", self.kv);
    }
}

/// Builder for the defaults and flag layers.
#[derive(Default)]
pub struct Layer(pub KeyValues);

impl Layer {
    pub fn set(mut self, key: &str, value: impl Display) -> Self {
        self.0.set(key, value);
        self
    }

    pub fn maybe<T: Display>(mut self, key: &str, value: Option<T>) -> Self {
        if let Some(v) = value {
            self.0.set(key, v);
        }
        self
    }

    pub fn path(self, key: &str, value: Option<&PathBuf>) -> Self {
        self.maybe(key, value.map(|p| p.display()))
    }
}
