//! Declarative experiment configuration (TOML with `${VAR}` interpolation).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arena::ComparisonConfig;
use crate::embed::EmbeddingSource;
use crate::error::{Error, Result};
use crate::gateway::{HttpConfig, ScriptedOracleConfig};
use crate::reduce::{ReductionConfig, Strategy};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::Config(vec![format!("unknown backend `{other}`")])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Upper bound on in-flight backend calls.
    pub parallelism: usize,
    #[serde(flatten)]
    pub http: HttpConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            parallelism: 8,
            http: HttpConfig::default(),
        }
    }
}

/// Order in which the catalog is presented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Presentation {
    AsIs,
    /// Shuffled per (repeat seed, instance).
    #[default]
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub catalog: PathBuf,
    pub dataset: PathBuf,
    /// Training split supplying demonstrations.
    pub train: Option<PathBuf>,
    /// Previously saved demonstration store; takes precedence over `train`.
    pub demonstrations: Option<PathBuf>,
    /// Exemplars kept per label when building the store from `train`.
    pub store_capacity: Option<usize>,
    pub backend: BackendConfig,
    pub oracle: ScriptedOracleConfig,
    pub reduction: ReductionConfig,
    pub comparison: ComparisonConfig,
    pub embedding: EmbeddingSource,
    pub presentation: Presentation,
    /// Run full-option methods over the reduced set instead of the catalog.
    pub full_option_over_reduced: bool,
    pub repeats: usize,
    pub seed: u64,
    /// Explicit per-repeat seeds; derived from `seed` when empty.
    pub seeds: Vec<u64>,
    /// Positions for the bias sweep.
    pub positions: Vec<usize>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            catalog: PathBuf::new(),
            dataset: PathBuf::new(),
            train: None,
            demonstrations: None,
            store_capacity: Some(5),
            backend: BackendConfig::default(),
            oracle: ScriptedOracleConfig::default(),
            reduction: ReductionConfig::default(),
            comparison: ComparisonConfig::default(),
            embedding: EmbeddingSource::default(),
            presentation: Presentation::Shuffled,
            full_option_over_reduced: false,
            repeats: 5,
            seed: 0,
            seeds: Vec::new(),
            positions: vec![0],
            cache_dir: None,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
/// Every unset variable is reported.
pub fn interpolate_env(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut missing = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                match std::env::var(name) {
                    Ok(v) => out.push_str(&v),
                    Err(_) => missing.push(format!("environment variable `{name}` is not set")),
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::Config(missing))
    }
}

impl ExperimentConfig {
    /// Parses a TOML file. Relative paths resolve against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = toml::from_str(&interpolate_env(&raw)?)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.catalog);
        fix(&mut self.dataset);
        fix(&mut self.out_dir);
        for p in [&mut self.train, &mut self.demonstrations, &mut self.cache_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let EmbeddingSource::File { path } = &mut self.embedding {
            fix(path);
        }
    }

    /// Per-repeat seeds.
    pub fn repeat_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).map(|r| seed::derive(self.seed, &[r])).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Checks everything that can be checked without calling a backend and
    /// reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need_file = |what: &str, p: &Path| {
            if p.as_os_str().is_empty() {
                problems.push(format!("{what} path is not set"));
            } else if !p.is_file() {
                problems.push(format!("{what} file {} does not exist", p.display()));
            }
        };
        need_file("catalog", &self.catalog);
        need_file("dataset", &self.dataset);
        if let Some(p) = &self.train {
            need_file("train", p);
        }
        if let Some(p) = &self.demonstrations {
            need_file("demonstrations", p);
        }
        if let (EmbeddingSource::File { path }, Strategy::Cbwr) = (&self.embedding, self.reduction.strategy) {
            need_file("embedding", path);
        }
        if self.repeats == 0 {
            problems.push("repeats must be at least 1".into());
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.repeats {
            problems.push(format!(
                "{} seeds listed for {} repeats",
                self.seeds.len(),
                self.repeats
            ));
        }
        if self.backend.parallelism == 0 {
            problems.push("backend.parallelism must be at least 1".into());
        }
        match self.backend.kind {
            BackendKind::Http => {
                if self.backend.http.base_url.trim().is_empty() {
                    problems.push("backend.base_url is empty".into());
                }
                if self.backend.http.model.trim().is_empty() {
                    problems.push("backend.model is empty".into());
                }
                if std::env::var(&self.backend.http.api_key_env).is_err() {
                    tracing::warn!(var = %self.backend.http.api_key_env, "bearer token variable is unset");
                }
            }
            BackendKind::Scripted => {
                if let Err(Error::Config(p)) = self.oracle.validate() {
                    problems.extend(p.into_iter().map(|m| format!("oracle: {m}")));
                }
            }
        }
        if let Err(Error::Config(p)) = self.reduction.validate() {
            problems.extend(p);
        }
        if self.comparison.method.few_shot()
            && self.comparison.shots > 0
            && self.train.is_none()
            && self.demonstrations.is_none()
        {
            problems.push(format!(
                "method {} needs demonstrations: set `train` or `demonstrations`",
                self.comparison.method
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}
