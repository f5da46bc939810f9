//! Run configuration: a JSON document with a schema version. Relative paths
//! resolve against the configuration file's directory.

use std::path::{Path, PathBuf};

use promptshap_core::ensemble::{Rule, TieRule};
use promptshap_core::learn::RegressorSpec;
use promptshap_core::{rng, Method, DEFAULT_EXACT_CAP};
use serde::{Deserialize, Serialize};

use crate::client::ApiConfig;
use crate::error::{Error, Result};
use crate::extract::TaskKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    MultipleChoice,
    Date,
    Numeric,
}

impl Task {
    pub fn answer_kind(self) -> Option<TaskKind> {
        match self {
            Task::Classification => None,
            Task::MultipleChoice => Some(TaskKind::MultipleChoice),
            Task::Date => Some(TaskKind::Date),
            Task::Numeric => Some(TaskKind::Numeric),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityMode {
    MatrixVote,
    MatrixAverage,
    LiveAugmentation,
}

impl UtilityMode {
    pub fn rule(self) -> Option<Rule> {
        match self {
            UtilityMode::MatrixVote => Some(Rule::Vote),
            UtilityMode::MatrixAverage => Some(Rule::AverageArgmax),
            UtilityMode::LiveAugmentation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySettings {
    pub mode: UtilityMode,
    #[serde(default)]
    pub tie_rule: TieRule,
    /// Value of the empty coalition for matrix modes.
    #[serde(default)]
    pub u_empty: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    /// Live-mode questions, JSON Lines `{"id","question","answer"}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility_cache: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSettings {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub truncation_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub exact_cap: usize,
}

fn default_method() -> Method {
    Method::Exact
}
fn default_permutations() -> usize {
    1000
}
fn default_cap() -> usize {
    DEFAULT_EXACT_CAP
}

impl Default for GameSettings {
    fn default() -> Self {
        Self {
            method: default_method(),
            permutations: default_permutations(),
            truncation_tol: 0.0,
            seed: 0,
            exact_cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnSettings {
    #[serde(default = "RegressorSpec::ridge_default")]
    pub regressor: RegressorSpec,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub unit_norm: bool,
}

fn default_fraction() -> f64 {
    0.8
}

impl Default for LearnSettings {
    fn default() -> Self {
        Self { regressor: RegressorSpec::ridge_default(), train_fraction: default_fraction(), unit_norm: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub task: Task,
    pub utility: UtilitySettings,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub game: GameSettings,
    #[serde(default)]
    pub learn: LearnSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<ApiConfig>,
}

/// Seed for a named sub-task: `seed + fnv1a64(purpose)`.
pub fn derived_seed(seed: u64, purpose: &str) -> u64 {
    rng::derive_seed(seed, purpose)
}

pub const PURPOSE_SPLIT: &str = "holdout-split";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.manifest,
            &mut p.matrix,
            &mut p.validation,
            &mut p.questions,
            &mut p.embeddings,
            &mut p.utility_cache,
            &mut p.response_cache,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.paths;
        let need = |name: &str, v: &Option<PathBuf>| -> Result<()> {
            match v {
                None => Err(Error::Config(format!("{:?} mode requires paths.{name}", self.utility.mode))),
                Some(path) if !path.exists() => Err(Error::Config(format!("paths.{name}: {} does not exist", path.display()))),
                Some(_) => Ok(()),
            }
        };
        let forbid = |name: &str, v: &Option<PathBuf>| -> Result<()> {
            match v {
                Some(_) => Err(Error::Config(format!("paths.{name} is not used in {:?} mode", self.utility.mode))),
                None => Ok(()),
            }
        };
        match self.utility.mode {
            UtilityMode::MatrixVote | UtilityMode::MatrixAverage => {
                if self.task != Task::Classification {
                    return Err(Error::Config("matrix modes evaluate classification tasks".into()));
                }
                need("matrix", &p.matrix)?;
                need("validation", &p.validation)?;
                forbid("questions", &p.questions)?;
                forbid("response_cache", &p.response_cache)?;
            }
            UtilityMode::LiveAugmentation => {
                if self.task == Task::Classification {
                    return Err(Error::Config("live augmentation needs a multiple-choice, date or numeric task".into()));
                }
                need("manifest", &p.manifest)?;
                need("questions", &p.questions)?;
                forbid("matrix", &p.matrix)?;
                forbid("validation", &p.validation)?;
                if self.api.is_none() {
                    return Err(Error::Config("live augmentation requires an api section".into()));
                }
            }
        }
        for (name, v) in [("manifest", &p.manifest), ("embeddings", &p.embeddings)] {
            if let Some(path) = v {
                if !path.exists() {
                    return Err(Error::Config(format!("paths.{name}: {} does not exist", path.display())));
                }
            }
        }
        let g = &self.game;
        if g.method == Method::MonteCarlo && g.permutations == 0 {
            return Err(Error::Config("game.permutations must be positive".into()));
        }
        if !(g.truncation_tol >= 0.0) {
            return Err(Error::Config("game.truncation_tol must be non-negative".into()));
        }
        if !(self.learn.train_fraction > 0.0 && self.learn.train_fraction < 1.0) {
            return Err(Error::Config("learn.train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        crate::formats::to_json_pretty(self)
    }
}
