//! Run configuration: one TOML file with top-level `schema`, `seeds` and
//! `out_dir` keys followed by `[env]`, `[train]`, `[symbolizer]`,
//! `[steering]` and `[eval]` tables. Every key is optional.
//!
//! ```toml
//! schema = "a2"
//! seeds = [0, 1, 2]
//! out_dir = "runs/demo"
//!
//! [env]
//! horizon = 1000
//! seed = 7
//!
//! [steering]
//! mode = "condition"
//! intents = ["notSchedule(6) @ [680, 880]"]
//! ```
//!
//! `SYMBXRL_SEED` overrides `env.seed` and narrows `seeds` to that value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use symxrl_core::intent::{parse_intent_file, Intent};
use symxrl_core::model::SchemaA2;
use symxrl_core::steering::{SteeringConfig, SteeringMode};
use symxrl_core::symbolizer::Tolerance;
use thiserror::Error;

use crate::agent::TrainConfig;
use crate::env::MimoEnvConfig;
use crate::experiment::EvalPolicy;

pub const SEED_VAR: &str = "SYMBXRL_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{SEED_VAR} must be an unsigned integer, got `{0}`")]
    SeedVar(String),
    #[error("{path}:{line}: {message}")]
    Intent { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    A1,
    #[default]
    A2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolizerSection {
    /// Relative change under which a KPI counts as constant.
    pub eps_rel: f64,
    /// Absolute floor of the constant band.
    pub eps_abs: f64,
}

impl Default for SymbolizerSection {
    fn default() -> Self {
        let t = Tolerance::default();
        Self { eps_rel: t.relative, eps_abs: t.floor }
    }
}

impl SymbolizerSection {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance { relative: self.eps_rel, floor: self.eps_abs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringSection {
    pub mode: SteeringMode,
    pub start_fraction: f64,
    pub delta: f64,
    /// Look up the nearest recorded state when the current one is unseen.
    pub similar_state_fallback: bool,
    pub fallback_distance: f64,
    /// Intents written inline, one per entry.
    pub intents: Vec<String>,
    /// Intent file, one intent per line; `#` starts a comment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent_file: Option<PathBuf>,
}

impl Default for SteeringSection {
    fn default() -> Self {
        let d = SteeringConfig::default();
        Self {
            mode: d.mode,
            start_fraction: d.start_fraction,
            delta: d.delta,
            similar_state_fallback: true,
            fallback_distance: d.fallback_distance.unwrap_or(1.0),
            intents: Vec::new(),
            intent_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Exploration rate of the deployed agent during evaluation episodes.
    pub epsilon: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: SchemaKind,
    /// Evaluation and simulation seeds, one episode each.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub env: MimoEnvConfig,
    pub train: TrainConfig,
    pub symbolizer: SymbolizerSection,
    pub steering: SteeringSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SchemaKind::A2,
            seeds: (0..10).collect(),
            out_dir: PathBuf::from("out"),
            env: MimoEnvConfig::default(),
            train: TrainConfig::default(),
            symbolizer: SymbolizerSection::default(),
            steering: SteeringSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Reads, applies `SYMBXRL_SEED` and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        // Relative intent files are resolved against the config's directory.
        if let (Some(file), Some(dir)) = (&cfg.steering.intent_file, path.parent()) {
            if file.is_relative() {
                cfg.steering.intent_file = Some(dir.join(file));
            }
        }
        cfg.apply_seed_override(std::env::var(SEED_VAR).ok().as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            let seed = v.trim().parse().map_err(|_| ConfigError::SeedVar(v.into()))?;
            self.env.seed = seed;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        if let Err(e) = self.env.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return invalid(e.to_string());
        }
        let s = &self.symbolizer;
        if !(s.eps_rel >= 0.0 && s.eps_rel.is_finite() && s.eps_abs >= 0.0 && s.eps_abs.is_finite()) {
            return invalid("symbolizer tolerances must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.eval.epsilon) {
            return invalid(format!("eval epsilon must lie in [0, 1], got {}", self.eval.epsilon));
        }
        if let Some(file) = &self.steering.intent_file {
            if !file.is_file() {
                return invalid(format!("intent file {} does not exist", file.display()));
            }
        }
        Ok(())
    }

    pub fn eval_policy(&self) -> EvalPolicy {
        EvalPolicy { epsilon: self.eval.epsilon }
    }

    /// Parses inline intents followed by the intent file, if any.
    pub fn intents(&self) -> Result<Vec<Intent>, ConfigError> {
        let schema = self.env.schema();
        let mut out = load_intents_text(&self.steering.intents.join("\n"), &schema, Path::new("<config>"))?;
        if let Some(path) = &self.steering.intent_file {
            out.extend(load_intent_file(path, &schema)?);
        }
        Ok(out)
    }

    /// Steering config with intents resolved; not yet validated.
    pub fn steering_config(&self) -> Result<SteeringConfig, ConfigError> {
        let s = &self.steering;
        Ok(SteeringConfig {
            mode: s.mode,
            start_fraction: s.start_fraction,
            delta: s.delta,
            fallback_distance: s.similar_state_fallback.then_some(s.fallback_distance),
            intents: self.intents()?,
        })
    }
}

fn load_intents_text(text: &str, schema: &SchemaA2, path: &Path) -> Result<Vec<Intent>, ConfigError> {
    parse_intent_file(text, schema).map_err(|(line, e)| ConfigError::Intent {
        path: path.into(),
        line,
        message: e.to_string(),
    })
}

pub fn load_intent_file(path: &Path, schema: &SchemaA2) -> Result<Vec<Intent>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    load_intents_text(&text, schema, path)
}
