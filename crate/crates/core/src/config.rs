//! Layered run configuration.
//!
//! Values come from built-in defaults, then a `key = value` file, then
//! `EXBT_<KEY>` environment variables, then command-line flags; later
//! layers win. `BACKEND_URL`, `BACKEND_KIND` and `BACKEND_TOKEN` are also
//! read from the environment. The backend token is accepted from the
//! environment only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: line {line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { origin: String, key: String, value: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Http,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunnerKind {
    None,
    Replay,
    Command,
}

/// Resolved settings. Paths are absolute or relative to the working
/// directory; paths from a config file are taken relative to that file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub source_roots: Option<String>,
    pub ebt_log: Option<PathBuf>,
    pub nonebt_log: Option<PathBuf>,
    pub offsets: Option<PathBuf>,
    pub coverage: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub nonebt_budget: usize,
    pub variants: usize,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    #[serde(skip)]
    pub backend_token: Option<String>,
    pub canned: Option<PathBuf>,
    pub request_log: Option<PathBuf>,
    pub concurrency: usize,
    pub timeout_ms: u64,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub runner: RunnerKind,
    pub outcomes: Option<PathBuf>,
    pub compile_cmd: Option<String>,
    pub test_cmd: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            source_roots: None,
            ebt_log: None,
            nonebt_log: None,
            offsets: None,
            coverage: None,
            cache_dir: None,
            nonebt_budget: crate::prompting::DEFAULT_NONEBT_BUDGET,
            variants: 1,
            backend: BackendKind::Stub,
            backend_url: None,
            backend_token: None,
            canned: None,
            request_log: None,
            concurrency: 4,
            timeout_ms: 60_000,
            max_new_tokens: 1024,
            temperature: 0.0,
            runner: RunnerKind::None,
            outcomes: None,
            compile_cmd: None,
            test_cmd: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "source_roots",
    "ebt_log",
    "nonebt_log",
    "offsets",
    "coverage",
    "cache_dir",
    "nonebt_budget",
    "variants",
    "backend",
    "backend_url",
    "canned",
    "request_log",
    "concurrency",
    "timeout_ms",
    "max_new_tokens",
    "temperature",
    "runner",
    "outcomes",
    "compile_cmd",
    "test_cmd",
];

const PATH_KEYS: &[&str] = &["ebt_log", "nonebt_log", "offsets", "coverage", "cache_dir", "canned", "request_log", "outcomes"];

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_file_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { origin: origin.to_string(), line: i + 1 })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Environment layer: `EXBT_<KEY>` plus the unprefixed backend variables.
pub fn env_layer(vars: impl IntoIterator<Item = (String, String)>) -> (BTreeMap<String, String>, Option<String>) {
    let mut out = BTreeMap::new();
    let mut token = None;
    for (k, v) in vars {
        match k.as_str() {
            "BACKEND_URL" => {
                out.entry("backend_url".to_string()).or_insert(v);
            }
            "BACKEND_KIND" => {
                out.entry("backend".to_string()).or_insert(v);
            }
            "BACKEND_TOKEN" | "EXBT_BACKEND_TOKEN" => token = Some(v),
            _ => {
                if let Some(key) = k.strip_prefix("EXBT_") {
                    let key = key.to_ascii_lowercase();
                    if KEYS.contains(&key.as_str()) {
                        out.insert(key, v);
                    }
                }
            }
        }
    }
    (out, token)
}

impl Config {
    /// Applies one layer. `base` resolves relative paths for file layers.
    pub fn apply(&mut self, layer: &BTreeMap<String, String>, origin: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        for (key, value) in layer {
            let bad = |reason: &str| ConfigError::InvalidValue {
                origin: origin.to_string(),
                key: key.clone(),
                value: value.clone(),
                reason: reason.to_string(),
            };
            let path = || {
                let p = PathBuf::from(value);
                match base {
                    Some(b) if p.is_relative() && PATH_KEYS.contains(&key.as_str()) => b.join(p),
                    _ => p,
                }
            };
            let int = || value.parse::<u64>().map_err(|_| bad("expected a non-negative integer"));
            match key.as_str() {
                "seed" => self.seed = int()?,
                "source_roots" => self.source_roots = Some(value.clone()),
                "ebt_log" => self.ebt_log = Some(path()),
                "nonebt_log" => self.nonebt_log = Some(path()),
                "offsets" => self.offsets = Some(path()),
                "coverage" => self.coverage = Some(path()),
                "cache_dir" => self.cache_dir = Some(path()),
                "nonebt_budget" => self.nonebt_budget = int()? as usize,
                "variants" => {
                    let v = int()? as usize;
                    if !(1..=crate::prompting::MAX_NONEBT_VARIANTS).contains(&v) {
                        return Err(bad("expected 1 to 5"));
                    }
                    self.variants = v;
                }
                "backend" => {
                    self.backend = match value.as_str() {
                        "stub" => BackendKind::Stub,
                        "http" => BackendKind::Http,
                        "replay" => BackendKind::Replay,
                        _ => return Err(bad("expected stub, http or replay")),
                    }
                }
                "backend_url" => self.backend_url = Some(value.clone()),
                "canned" => self.canned = Some(path()),
                "request_log" => self.request_log = Some(path()),
                "concurrency" => self.concurrency = (int()? as usize).max(1),
                "timeout_ms" => self.timeout_ms = int()?,
                "max_new_tokens" => self.max_new_tokens = int()? as u32,
                "temperature" => self.temperature = value.parse().map_err(|_| bad("expected a number"))?,
                "runner" => {
                    self.runner = match value.as_str() {
                        "none" => RunnerKind::None,
                        "replay" => RunnerKind::Replay,
                        "command" => RunnerKind::Command,
                        _ => return Err(bad("expected none, replay or command")),
                    }
                }
                "outcomes" => self.outcomes = Some(path()),
                "compile_cmd" => self.compile_cmd = Some(value.clone()),
                "test_cmd" => self.test_cmd = Some(value.clone()),
                _ => return Err(ConfigError::UnknownKey { origin: origin.to_string(), key: key.clone() }),
            }
        }
        Ok(())
    }

    /// Defaults, then `file`, then environment, then flags.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            let origin = path.display().to_string();
            cfg.apply(&parse_file_text(&text, &origin)?, &origin, Some(path.parent().unwrap_or(Path::new("."))))?;
        }
        let (env_map, token) = env_layer(env);
        cfg.apply(&env_map, "environment", None)?;
        cfg.backend_token = token;
        cfg.apply(flags, "command line", None)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn layers_override_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("exbt.conf");
        fs::write(&file, "# run settings\nseed = 1\nconcurrency = 2\ncanned = .exbt/canned.json\nbackend = stub\n").unwrap();
        let env = vec![("EXBT_SEED".to_string(), "2".to_string()), ("BACKEND_TOKEN".to_string(), "secret".to_string())];
        let cfg = Config::resolve(Some(&file), env.clone(), &map(&[])).unwrap();
        assert_eq!((cfg.seed, cfg.concurrency), (2, 2));
        assert_eq!(cfg.canned, Some(dir.path().join(".exbt/canned.json")));
        assert_eq!(cfg.backend_token.as_deref(), Some("secret"));
        let cfg = Config::resolve(Some(&file), env, &map(&[("seed", "3")])).unwrap();
        assert_eq!(cfg.seed, 3);
        assert!(!serde_json::to_string(&cfg).unwrap().contains("secret"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::resolve(None, vec![], &map(&[("colour", "red")])), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(Config::resolve(None, vec![], &map(&[("seed", "-1")])), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(Config::resolve(None, vec![], &map(&[("variants", "6")])), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(parse_file_text("seed 4", "f"), Err(ConfigError::Syntax { line: 1, .. })));
        let (env, _) = env_layer(vec![("BACKEND_KIND".into(), "http".into()), ("EXBT_UNKNOWN".into(), "x".into())]);
        assert_eq!(env, map(&[("backend", "http")]));
    }
}
