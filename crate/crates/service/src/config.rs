//! Flat key-value settings shared by the service and the command line.
//!
//! Precedence: built-in defaults, then the config file, then `MAILTRIAGE_*`
//! environment variables, then whatever the caller overrides explicitly.

use std::path::{Path, PathBuf};

use mailtriage_core::corpus::DEFAULT_MIN_DOCS;
use mailtriage_core::features::DEFAULT_TOP_K;
use mailtriage_core::learners::Family;
use mailtriage_core::stp::Mode;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub bind: String,
    pub port: u16,
    pub store: PathBuf,
    /// Bundle loaded at start-up and rewritten after each relearn.
    pub model: Option<PathBuf>,
    pub mode: Mode,
    pub family: Family,
    pub min_docs: usize,
    pub top_k: usize,
    pub seed: u64,
    pub folds: usize,
    /// Directory with lexicon and word lists; built-ins when unset.
    pub resources: Option<PathBuf>,
    /// Seconds between automatic relearns; 0 disables the timer.
    pub relearn_interval_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            store: PathBuf::from("store"),
            model: None,
            mode: Mode::Combined,
            family: Family::LinearSvmOvr,
            min_docs: DEFAULT_MIN_DOCS,
            top_k: DEFAULT_TOP_K,
            seed: 1,
            folds: 10,
            resources: None,
            relearn_interval_secs: 0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileValues {
    bind: Option<String>,
    port: Option<u16>,
    store: Option<PathBuf>,
    model: Option<PathBuf>,
    mode: Option<String>,
    family: Option<String>,
    min_docs: Option<usize>,
    top_k: Option<usize>,
    seed: Option<u64>,
    folds: Option<usize>,
    resources: Option<PathBuf>,
    relearn_interval_secs: Option<u64>,
}

pub const ENV_PREFIX: &str = "MAILTRIAGE_";

impl Config {
    /// Defaults, overlaid with `path` when given, then with the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            cfg.apply_toml(&raw).map_err(|e| match e {
                ConfigError::Value { key, message } => ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: format!("{key}: {message}"),
                },
                other => other,
            })?;
            // relative paths in the file are relative to the file
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.store = base.join(&cfg.store);
            cfg.model = cfg.model.map(|m| base.join(m));
            cfg.resources = cfg.resources.map(|r| base.join(r));
        }
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn apply_toml(&mut self, raw: &str) -> Result<(), ConfigError> {
        let v: FileValues = toml::from_str(raw).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        if let Some(x) = v.bind {
            self.bind = x;
        }
        if let Some(x) = v.port {
            self.port = x;
        }
        if let Some(x) = v.store {
            self.store = x;
        }
        if v.model.is_some() {
            self.model = v.model;
        }
        if let Some(x) = v.mode {
            self.mode = parse_value("mode", &x)?;
        }
        if let Some(x) = v.family {
            self.family = parse_value("family", &x)?;
        }
        if let Some(x) = v.min_docs {
            self.min_docs = x;
        }
        if let Some(x) = v.top_k {
            self.top_k = x;
        }
        if let Some(x) = v.seed {
            self.seed = x;
        }
        if let Some(x) = v.folds {
            self.folds = x;
        }
        if v.resources.is_some() {
            self.resources = v.resources;
        }
        if let Some(x) = v.relearn_interval_secs {
            self.relearn_interval_secs = x;
        }
        Ok(())
    }

    /// Applies `MAILTRIAGE_<KEY>` variables; other variables are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            match key.as_str() {
                "bind" => self.bind = value,
                "port" => self.port = parse_value(&name, &value)?,
                "store" => self.store = PathBuf::from(value),
                "model" => self.model = Some(PathBuf::from(value)),
                "mode" => self.mode = parse_value(&name, &value)?,
                "family" => self.family = parse_value(&name, &value)?,
                "min_docs" => self.min_docs = parse_value(&name, &value)?,
                "top_k" => self.top_k = parse_value(&name, &value)?,
                "seed" => self.seed = parse_value(&name, &value)?,
                "folds" => self.folds = parse_value(&name, &value)?,
                "resources" => self.resources = Some(PathBuf::from(value)),
                "relearn_interval_secs" => self.relearn_interval_secs = parse_value(&name, &value)?,
                _ => {}
            }
        }
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env_precedence() {
        let mut cfg = Config::default();
        cfg.apply_toml("port = 9000\nmode = \"heuristics\"\nfamily = \"knn\"\nmin_docs = 12\n")
            .unwrap();
        assert_eq!((cfg.port, cfg.mode, cfg.family, cfg.min_docs), (9000, Mode::Heuristics, Family::Knn, 12));
        cfg.apply_env([
            ("MAILTRIAGE_PORT".to_string(), "9100".to_string()),
            ("MAILTRIAGE_FAMILY".to_string(), "nb".to_string()),
            ("HOME".to_string(), "/x".to_string()),
        ])
        .unwrap();
        assert_eq!((cfg.port, cfg.family, cfg.mode), (9100, Family::NaiveBayes, Mode::Heuristics));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::default().apply_toml("colour = 1").is_err());
        assert!(Config::default().apply_toml("mode = \"deep\"").is_err());
        let err = Config::default()
            .apply_env([("MAILTRIAGE_PORT".to_string(), "many".to_string())])
            .unwrap_err();
        assert!(err.to_string().contains("MAILTRIAGE_PORT"));
    }

    #[test]
    fn file_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triage.toml");
        std::fs::write(&path, "store = \"data\"\nmodel = \"m.json\"\n").unwrap();
        let cfg = Config::load(Some(&path)).unwrap();
        assert_eq!(cfg.store, dir.path().join("data"));
        assert_eq!(cfg.model, Some(dir.path().join("m.json")));
    }
}
