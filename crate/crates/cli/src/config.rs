//! Run configuration: one file (TOML or JSON, same schema) driving every
//! stage, plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wkm_core::env::{EnvConfig, RewardMode};
use wkm_core::planner::{default_gamma, PlannerConfig, PlannerMode, DEFAULT_RETRIEVAL_N};
use wkm_core::trajectory::{EnvKind, Split};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    pub kind: EnvKind,
    pub seed: u64,
    pub train: usize,
    pub test_seen: usize,
    pub test_unseen: usize,
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub reward_mode: Option<RewardMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderSource {
    Oracle,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderBlock {
    pub source: ProviderSource,
    #[serde(default)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersBlock {
    pub agent: ProviderBlock,
    pub wkm: ProviderBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineBlock {
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerBlock {
    #[serde(default = "default_mode")]
    pub mode: PlannerMode,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_retrieval_n")]
    pub retrieval_n: usize,
}

fn default_mode() -> PlannerMode {
    PlannerMode::Full
}

fn default_retrieval_n() -> usize {
    DEFAULT_RETRIEVAL_N
}

impl Default for PlannerBlock {
    fn default() -> Self {
        PlannerBlock {
            mode: default_mode(),
            gamma: None,
            retrieval_n: default_retrieval_n(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_split() -> Split {
    Split::TestSeen
}

fn default_gammas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            split: default_split(),
            gammas: default_gammas(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvBlock,
    pub provider: ProvidersBlock,
    pub pipeline: PipelineBlock,
    #[serde(default)]
    pub planner: PlannerBlock,
    #[serde(default)]
    pub eval: EvalBlock,
}

impl RunConfig {
    /// Parse TOML or JSON; the schema is identical. JSON is tried when the
    /// extension is .json, TOML otherwise.
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = if path.extension().is_some_and(|x| x == "json") {
            serde_json::from_str(&raw)
                .map_err(|e| CliError::Config(format!("config parse error: {e}")))?
        } else {
            toml::from_str(&raw)
                .map_err(|e| CliError::Config(format!("config parse error: {e}")))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.env.train == 0 || self.env.test_seen == 0 || self.env.test_unseen == 0 {
            return Err(CliError::Config("suite sizes must be positive".into()));
        }
        for (role, block) in [("agent", &self.provider.agent), ("wkm", &self.provider.wkm)] {
            match block.source {
                ProviderSource::Remote if block.endpoint.is_none() => {
                    return Err(CliError::Config(format!(
                        "provider.{role}: remote source requires an endpoint"
                    )));
                }
                ProviderSource::Oracle if block.endpoint.is_some() => {
                    return Err(CliError::Config(format!(
                        "provider.{role}: oracle source takes no endpoint"
                    )));
                }
                _ => {}
            }
        }
        if let Some(g) = self.planner.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(CliError::Config(format!("gamma {g} outside [0,1]")));
            }
        }
        if self.planner.retrieval_n == 0 {
            return Err(CliError::Config("retrieval_n must be positive".into()));
        }
        if self.eval.gammas.is_empty() {
            return Err(CliError::Config("eval.gammas must be non-empty".into()));
        }
        self.env_config().validate().map_err(CliError::from)
    }

    pub fn env_config(&self) -> EnvConfig {
        let mut cfg = EnvConfig::new(self.env.kind, self.env.seed);
        if let Some(m) = self.env.max_steps {
            cfg.max_steps = m;
        }
        if let Some(r) = self.env.reward_mode {
            cfg.reward_mode = r;
        }
        cfg
    }

    pub fn gamma(&self) -> f64 {
        self.planner.gamma.unwrap_or_else(|| default_gamma(self.env.kind))
    }

    pub fn planner_config(&self) -> CliResult<PlannerConfig> {
        PlannerConfig::new(self.planner.mode, self.gamma(), self.planner.retrieval_n)
            .map_err(CliError::from)
    }

    pub fn out_dir(&self) -> &Path {
        &self.pipeline.out_dir
    }

    /// Hash of the parsed config; TOML and JSON spellings of the same config
    /// hash identically.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        crate::manifest::sha256_hex(canonical.as_bytes())
    }
}

/// Command-line overrides applied after the config file is parsed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub mode: Option<PlannerMode>,
    pub split: Option<Split>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> CliResult<()> {
        if let Some(seed) = self.seed {
            config.env.seed = seed;
        }
        if let Some(gamma) = self.gamma {
            config.planner.gamma = Some(gamma);
        }
        if let Some(mode) = self.mode {
            config.planner.mode = mode;
        }
        if let Some(split) = self.split {
            config.eval.split = split;
        }
        config.validate()
    }
}

pub fn parse_mode(raw: &str) -> CliResult<PlannerMode> {
    match raw {
        "full" => Ok(PlannerMode::Full),
        "no_state" => Ok(PlannerMode::NoState),
        "no_task" => Ok(PlannerMode::NoTask),
        "explicit_state" => Ok(PlannerMode::ExplicitState),
        other => Err(CliError::Config(format!(
            "unknown mode {other:?} (expected full, no_state, no_task or explicit_state)"
        ))),
    }
}

pub fn parse_split(raw: &str) -> CliResult<Split> {
    match raw {
        "train" => Ok(Split::Train),
        "test-seen" => Ok(Split::TestSeen),
        "test-unseen" => Ok(Split::TestUnseen),
        other => Err(CliError::Config(format!(
            "unknown split {other:?} (expected train, test-seen or test-unseen)"
        ))),
    }
}
