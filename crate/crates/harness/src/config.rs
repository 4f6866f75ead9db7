//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! episodes = 300
//! seeds = [0, 1, 2, 3, 4]
//!
//! [instance]
//! kind = "sampled"
//! uavs = 3
//! rsus = 2
//!
//! [env]
//! history_length = 1
//! episode_length = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tinymarl_core::agents::{AgentSettings, Algorithm};
use tinymarl_core::env::EnvConfig;
use tinymarl_core::game::GameInstance;

use crate::sampling::{sample_instance, SamplingRanges};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Where the game comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Sampled {
        uavs: usize,
        rsus: usize,
        #[serde(default)]
        ranges: SamplingRanges,
    },
    Explicit {
        game: GameInstance,
    },
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec::Sampled { uavs: 3, rsus: 2, ranges: SamplingRanges::default() }
    }
}

impl InstanceSpec {
    /// The game for `seed`; explicit games ignore the seed.
    pub fn build(&self, seed: u64) -> Result<GameInstance, ConfigError> {
        match self {
            InstanceSpec::Sampled { uavs, rsus, ranges } => {
                sample_instance(ranges, *uavs, *rsus, rng_seed(seed))
            }
            InstanceSpec::Explicit { game } => Ok(game.clone()),
        }
    }

    pub fn with_counts(&self, uavs: Option<usize>, rsus: Option<usize>) -> Result<InstanceSpec, ConfigError> {
        match self {
            InstanceSpec::Sampled { uavs: u, rsus: r, ranges } => Ok(InstanceSpec::Sampled {
                uavs: uavs.unwrap_or(*u),
                rsus: rsus.unwrap_or(*r),
                ranges: ranges.clone(),
            }),
            InstanceSpec::Explicit { .. } => {
                Err(ConfigError::Invalid(vec!["UAV/RSU count sweeps need a sampled instance".into()]))
            }
        }
    }
}

/// The instance stream is a named child of the run seed, so the agents'
/// streams never overlap it.
fn rng_seed(seed: u64) -> u64 {
    tinymarl_core::rng::derive_seed(seed, "instance", 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub verify_probes: usize,
    pub verify_tolerance: f64,
    /// Fall back to exact best-response dynamics when the closed-form
    /// budget regimes disagree with the followers.
    pub polish_mixed: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { tolerance: 1e-9, max_iterations: 10_000, verify_probes: 1000, verify_tolerance: 1e-6, polish_mixed: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Every RSU's bandwidth cost.
    Cost,
    /// Every RSU's price cap.
    PriceCap,
    Uavs,
    Rsus,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Cost => "cost",
            SweepParameter::PriceCap => "price_cap",
            SweepParameter::Uavs => "uavs",
            SweepParameter::Rsus => "rsus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// Replicate seeds; the run's seeds when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Also train this algorithm at every grid point.
    #[serde(default)]
    pub train: Option<Algorithm>,
}

impl SweepSpec {
    fn collect_errors(&self, errors: &mut Vec<String>) {
        if self.grid.is_empty() {
            errors.push("sweep.grid: must not be empty".into());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            errors.push(format!("sweep.grid: must be strictly increasing, got {:?}", self.grid));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            errors.push("sweep.grid: values must be finite".into());
        }
        if matches!(self.parameter, SweepParameter::Uavs | SweepParameter::Rsus)
            && self.grid.iter().any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            errors.push(format!("sweep.grid: {} values must be positive integers", self.parameter.as_str()));
        }
        if matches!(self.parameter, SweepParameter::Cost | SweepParameter::PriceCap) && self.grid.iter().any(|v| *v <= 0.0)
        {
            errors.push(format!("sweep.grid: {} values must be positive", self.parameter.as_str()));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub instance: InstanceSpec,
    #[serde(default = "default_env")]
    pub env: EnvConfig,
    #[serde(default)]
    pub agents: AgentSettings,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub solver: SolveSettings,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_env() -> EnvConfig {
    EnvConfig { history_length: 1, episode_length: 10, ..EnvConfig::default() }
}

fn default_episodes() -> usize {
    300
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            instance: InstanceSpec::default(),
            env: default_env(),
            agents: AgentSettings::default(),
            episodes: default_episodes(),
            seeds: default_seeds(),
            algorithms: default_algorithms(),
            solver: SolveSettings::default(),
            sweep: None,
            output: default_output(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Agent settings for a run, with the exploration decay spanning the
    /// whole run unless set explicitly.
    pub fn effective_agents(&self) -> AgentSettings {
        let mut agents = self.agents.clone();
        if agents.ppo.std_anneal_steps.is_none() {
            agents.ppo.std_anneal_steps = Some(self.episodes * self.env.episode_length);
        }
        agents
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        match &self.instance {
            InstanceSpec::Sampled { uavs, rsus, ranges } => {
                if *uavs == 0 || *rsus == 0 {
                    errors.push("instance: uavs and rsus must be at least 1".into());
                }
                ranges.collect_errors(&mut errors);
            }
            InstanceSpec::Explicit { game } => {
                if let Err(e) = GameInstance::new(game.uavs().to_vec(), game.rsus().to_vec()) {
                    errors.push(format!("instance.game: {e}"));
                }
            }
        }
        if self.env.history_length == 0 {
            errors.push("env.history_length: must be at least 1".into());
        }
        if self.env.episode_length < self.env.history_length {
            errors.push("env.episode_length: must be at least env.history_length".into());
        }
        if let Err(e) = self.agents.ppo.validate() {
            errors.push(format!("agents.ppo: {e}"));
        }
        if let Err(e) = self.agents.schedule.validate() {
            errors.push(format!("agents.schedule: {e}"));
        }
        if !(0.0..=1.0).contains(&self.agents.greedy_epsilon) {
            errors.push("agents.greedy_epsilon: must lie in [0, 1]".into());
        }
        if self.episodes == 0 {
            errors.push("episodes: must be at least 1".into());
        }
        if self.seeds.is_empty() {
            errors.push("seeds: must not be empty".into());
        }
        if self.algorithms.is_empty() {
            errors.push("algorithms: must not be empty".into());
        }
        if !(self.solver.tolerance > 0.0) {
            errors.push("solver.tolerance: must be positive".into());
        }
        if !(self.solver.verify_tolerance >= 0.0) {
            errors.push("solver.verify_tolerance: must be non-negative".into());
        }
        if self.solver.max_iterations == 0 {
            errors.push("solver.max_iterations: must be at least 1".into());
        }
        if let Some(sweep) = &self.sweep {
            sweep.collect_errors(&mut errors);
            if matches!(sweep.parameter, SweepParameter::Uavs | SweepParameter::Rsus)
                && matches!(self.instance, InstanceSpec::Explicit { .. })
            {
                errors.push("sweep: UAV/RSU count sweeps need instance.kind = \"sampled\"".into());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let canonical = serde_json::to_string(&value).expect("json value serialises");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
