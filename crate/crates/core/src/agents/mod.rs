//! Pricing agents for [`PricingEnv`]: PPO, PPO with dynamic structured
//! pruning (Tiny MADRL), an epsilon-greedy bandit and uniform random pricing.
//!
//! Each RSU is driven by its own agent; agents see only their own market
//! history and reward, never the UAVs' private parameters.

mod baselines;
mod ppo;

pub use baselines::{random_act, GreedyAgent, RandomAgent, GREEDY_LEVELS};
pub use ppo::{
    clipped_ratio, clipped_surrogate, compute_advantages, ppo_update, tiny_madrl_step, to_prices, Adam, AgentError,
    GaussianPolicy, PpoAgent, PpoConfig, PruneReport, RolloutBuffer, RolloutRecord, UpdateReport,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Observation, PricingEnv};
use crate::rng::{self, StreamRng};
use crate::tinynet::PruneSchedule;

/// What an agent learns from one step of its own market.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub observation: &'a Observation,
    pub prices: &'a [f64],
    pub reward: f64,
    /// Demand each UAV placed with this RSU.
    pub demands: &'a [f64],
    pub next_observation: &'a Observation,
    pub done: bool,
}

pub trait PricingPolicy: Send {
    /// Price row for the next step.
    fn act(&mut self, observation: &Observation, rng: &mut StreamRng) -> Vec<f64>;

    /// Feedback for the action last returned by [`act`](Self::act).
    fn observe(&mut self, transition: &Transition);

    /// Fraction of pruned hidden neurons, for agents that prune.
    fn sparsity(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    TinyMadrl,
    Ppo,
    Greedy,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::TinyMadrl, Algorithm::Ppo, Algorithm::Greedy, Algorithm::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::TinyMadrl => "tiny_madrl",
            Algorithm::Ppo => "ppo",
            Algorithm::Greedy => "greedy",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected tiny_madrl, ppo, greedy or random)"))
    }
}

/// Settings shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub ppo: PpoConfig,
    pub schedule: PruneSchedule,
    pub greedy_epsilon: f64,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings { ppo: PpoConfig::default(), schedule: PruneSchedule::default(), greedy_epsilon: 0.1 }
    }
}

/// One agent per RSU of `env`. Network weights come from a per-RSU stream
/// of `seed`, shared by PPO and Tiny MADRL.
pub fn build_agents(
    algorithm: Algorithm,
    env: &PricingEnv,
    settings: &AgentSettings,
    seed: u64,
) -> Result<Vec<Box<dyn PricingPolicy>>, AgentError> {
    let inn = env.instance().num_uavs();
    (0..env.num_agents())
        .map(|j| {
            let (low, high) = env.price_box(j);
            let agent: Box<dyn PricingPolicy> = match algorithm {
                Algorithm::Ppo | Algorithm::TinyMadrl => {
                    let mut init = rng::stream(seed, "agent/init", j as u64, 0);
                    let agent = PpoAgent::new(settings.ppo.clone(), env.observation_len(), inn, low, high, &mut init)?;
                    if algorithm == Algorithm::TinyMadrl {
                        Box::new(agent.with_schedule(settings.schedule)?)
                    } else {
                        Box::new(agent)
                    }
                }
                Algorithm::Greedy => Box::new(GreedyAgent::new(inn, low, high, settings.greedy_epsilon)?),
                Algorithm::Random => Box::new(RandomAgent::new(inn, low, high)),
            };
            Ok(agent)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("non-finite reward {reward} for agent {agent} in episode {episode}, step {step}")]
    NonFiniteReward { episode: usize, step: usize, agent: usize, reward: f64 },
}

/// Per-episode outcome: each agent's mean per-step reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub rewards: Vec<f64>,
    pub average: f64,
    /// Mean pruned fraction over the agents that prune.
    pub sparsity: Option<f64>,
}

/// Play `episodes` episodes of `env` with one agent per RSU. Episode `e`
/// starts from `env.reset` seeded by a stream of `seed`; each agent draws
/// its actions from its own stream.
pub fn run_episodes(
    env: &mut PricingEnv,
    agents: &mut [Box<dyn PricingPolicy>],
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>, TrainError> {
    let jn = env.num_agents();
    assert_eq!(agents.len(), jn, "one agent per RSU");
    let mut rngs: Vec<StreamRng> = (0..jn).map(|j| rng::stream(seed, "agent/act", j as u64, 0)).collect();
    let mut stats = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut obs = env.reset(rng::derive_seed(seed, "env/episode", episode as u64));
        let mut totals = vec![0.0; jn];
        let mut steps = 0;
        loop {
            let actions: Vec<Vec<f64>> = agents.iter_mut().zip(&mut rngs).zip(&obs).map(|((a, r), o)| a.act(o, r)).collect();
            let out = env.step(&actions)?;
            for (j, &r) in out.rewards.iter().enumerate() {
                if !r.is_finite() {
                    return Err(TrainError::NonFiniteReward { episode, step: steps, agent: j, reward: r });
                }
            }
            for (j, agent) in agents.iter_mut().enumerate() {
                let demands = out.demands.rsu_column(j);
                agent.observe(&Transition {
                    observation: &obs[j],
                    prices: out.prices.rsu_row(j),
                    reward: out.rewards[j],
                    demands: &demands,
                    next_observation: &out.next_observations[j],
                    done: out.done,
                });
                totals[j] += out.rewards[j];
            }
            steps += 1;
            obs = out.next_observations;
            if out.done {
                break;
            }
        }
        let rewards: Vec<f64> = totals.iter().map(|t| t / steps as f64).collect();
        let pruned: Vec<f64> = agents.iter().filter_map(|a| a.sparsity()).collect();
        stats.push(EpisodeStats {
            episode,
            average: rewards.iter().sum::<f64>() / jn as f64,
            rewards,
            sparsity: (!pruned.is_empty()).then(|| pruned.iter().sum::<f64>() / pruned.len() as f64),
        });
    }
    Ok(stats)
}
