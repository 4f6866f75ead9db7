//! The pricing game as a multi-agent episodic environment.
//!
//! Each RSU is an agent whose action is its price row (one price per UAV).
//! The environment answers with the followers' exact best responses and pays
//! each RSU its utility. An agent observes the last `L` (price row, demand
//! column) records of its own market, normalised to `[0, 1]`.

use std::collections::VecDeque;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    all_followers_respond, rsu_utility, solve_equilibrium_with, DemandMatrix, GameError, GameInstance, PriceMatrix,
    SolverConfig,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("expected {expected} price rows of length {uavs}, got {got}")]
    ActionShape { expected: usize, uavs: usize, got: String },
    #[error("non-finite price from RSU {rsu} for UAV {uav}")]
    NonFinitePrice { rsu: usize, uav: usize },
    #[error("episode finished; call reset first")]
    EpisodeFinished,
    #[error(transparent)]
    Game(#[from] GameError),
}

/// How the history is filled at the start of an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    #[default]
    Zeros,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub history_length: usize,
    pub episode_length: usize,
    /// Per-RSU price normaliser; the price caps when absent.
    pub price_scale: Option<Vec<f64>>,
    /// Demand normaliser; `max delta * ln(1/min threshold) / min cost` when absent.
    pub demand_scale: Option<f64>,
    pub warmup: Warmup,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { history_length: 1, episode_length: 10, price_scale: None, demand_scale: None, warmup: Warmup::Zeros }
    }
}

impl EnvConfig {
    pub fn validate(&self, instance: &GameInstance) -> Result<(), EnvError> {
        if self.history_length == 0 {
            return Err(EnvError::Config("history_length must be at least 1".into()));
        }
        if self.episode_length < self.history_length {
            return Err(EnvError::Config(format!(
                "episode_length ({}) must be at least history_length ({})",
                self.episode_length, self.history_length
            )));
        }
        if let Some(scale) = &self.price_scale {
            if scale.len() != instance.num_rsus() {
                return Err(EnvError::Config(format!(
                    "price_scale has {} entries for {} RSUs",
                    scale.len(),
                    instance.num_rsus()
                )));
            }
            if let Some(bad) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                return Err(EnvError::Config(format!("price_scale entries must be positive, got {bad}")));
            }
        }
        if let Some(d) = self.demand_scale {
            if !(d.is_finite() && d > 0.0) {
                return Err(EnvError::Config(format!("demand_scale must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Upper bound on any unconstrained follower demand of `instance`.
pub fn default_demand_scale(instance: &GameInstance) -> f64 {
    let delta = instance.uavs().iter().map(|u| u.delta).fold(0.0, f64::max);
    let threshold = instance.uavs().iter().map(|u| u.ssim_threshold).fold(1.0, f64::min);
    let cost = instance.rsus().iter().map(|r| r.bandwidth_cost).fold(f64::INFINITY, f64::min);
    let scale = delta * (1.0 / threshold).ln() / cost;
    if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// One agent's view: `L` records of `I` normalised prices followed by `I`
/// normalised demands, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    /// Some demand in the window exceeded `demand_scale` and was clipped.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub prices: PriceMatrix,
    pub demands: DemandMatrix,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    /// `[rsu][uav]`
    prices: Vec<Vec<f64>>,
    /// `[uav][rsu]`
    demands: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PricingEnv {
    instance: GameInstance,
    config: EnvConfig,
    price_scale: Vec<f64>,
    demand_scale: f64,
    history: VecDeque<Record>,
    steps: usize,
}

impl PricingEnv {
    pub fn new(instance: GameInstance, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate(&instance)?;
        let price_scale =
            config.price_scale.clone().unwrap_or_else(|| instance.rsus().iter().map(|r| r.price_cap).collect());
        let demand_scale = config.demand_scale.unwrap_or_else(|| default_demand_scale(&instance));
        Ok(PricingEnv { instance, config, price_scale, demand_scale, history: VecDeque::new(), steps: 0 })
    }

    pub fn instance(&self) -> &GameInstance {
        &self.instance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_agents(&self) -> usize {
        self.instance.num_rsus()
    }

    pub fn observation_len(&self) -> usize {
        2 * self.instance.num_uavs() * self.config.history_length
    }

    /// `(cost, cap)` of RSU `j`.
    pub fn price_box(&self, j: usize) -> (f64, f64) {
        let rsu = self.instance.rsu(j);
        (rsu.bandwidth_cost, rsu.price_cap)
    }

    pub fn demand_scale(&self) -> f64 {
        self.demand_scale
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Start a new episode and return every agent's first observation.
    pub fn reset(&mut self, seed: u64) -> Vec<Observation> {
        let (jn, inn) = (self.instance.num_rsus(), self.instance.num_uavs());
        self.history.clear();
        self.steps = 0;
        for k in 0..self.config.history_length {
            let record = match self.config.warmup {
                Warmup::Zeros => Record { prices: vec![vec![0.0; inn]; jn], demands: vec![vec![0.0; jn]; inn] },
                Warmup::UniformRandom => {
                    let mut rng = rng::stream(seed, "env/warmup", k as u64, 0);
                    let prices = PriceMatrix::from_fn(&self.instance, |j, _| {
                        let (lo, hi) = self.price_box(j);
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    });
                    let demands = all_followers_respond(&self.instance, &prices);
                    Record { prices: prices.rows(), demands: demands.rows() }
                }
            };
            self.history.push_back(record);
        }
        self.observations()
    }

    /// Apply one joint action (`joint_prices[j]` is RSU `j`'s price row).
    /// Prices are clamped into their boxes.
    pub fn step(&mut self, joint_prices: &[Vec<f64>]) -> Result<StepOutcome, EnvError> {
        let (jn, inn) = (self.instance.num_rsus(), self.instance.num_uavs());
        if self.steps >= self.config.episode_length || self.history.is_empty() {
            return Err(EnvError::EpisodeFinished);
        }
        if joint_prices.len() != jn || joint_prices.iter().any(|r| r.len() != inn) {
            let got = joint_prices.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(",");
            return Err(EnvError::ActionShape { expected: jn, uavs: inn, got: format!("[{got}]") });
        }
        for (j, row) in joint_prices.iter().enumerate() {
            if let Some(i) = row.iter().position(|p| !p.is_finite()) {
                return Err(EnvError::NonFinitePrice { rsu: j, uav: i });
            }
        }
        let prices = PriceMatrix::clamped(&self.instance, joint_prices)?;
        let demands = all_followers_respond(&self.instance, &prices);
        let rewards =
            (0..jn).map(|j| rsu_utility(&self.instance, j, prices.rsu_row(j), &demands.rsu_column(j))).collect();

        self.history.pop_front();
        self.history.push_back(Record { prices: prices.rows(), demands: demands.rows() });
        self.steps += 1;
        Ok(StepOutcome {
            next_observations: self.observations(),
            rewards,
            prices,
            demands,
            done: self.steps >= self.config.episode_length,
        })
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.instance.num_rsus()).map(|j| self.observation(j)).collect()
    }

    fn observation(&self, j: usize) -> Observation {
        let mut features = Vec::with_capacity(self.observation_len());
        let mut clipped = false;
        for record in &self.history {
            features.extend(record.prices[j].iter().map(|p| (p / self.price_scale[j]).clamp(0.0, 1.0)));
            for row in &record.demands {
                let x = row[j] / self.demand_scale;
                clipped |= x > 1.0;
                features.push(x.clamp(0.0, 1.0));
            }
        }
        Observation { features, clipped }
    }
}

/// Average RSU utility at the analytic equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub value: f64,
    pub consistent: bool,
}

pub fn theoretical_baseline(instance: &GameInstance) -> Result<Baseline, GameError> {
    let solution = solve_equilibrium_with(instance, &SolverConfig::default())?;
    if !solution.consistent {
        warn!("equilibrium is not self-consistent; baseline {} is approximate", solution.average_rsu_utility());
    }
    Ok(Baseline { value: solution.average_rsu_utility(), consistent: solution.consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ChannelLink, RsuProfile, SsimTriple, UavProfile};
    use std::f64::consts::LN_2;

    fn symmetric() -> GameInstance {
        let ssim = 0.5 * 2.0;
        let uav = UavProfile {
            delta: 10.0,
            budget: 2.0,
            ssim_threshold: 0.5,
            per_rsu_ssim: vec![SsimTriple::new(ssim, 1.0, 1.0).unwrap(); 2],
        };
        let link = ChannelLink::with_spectrum_efficiency(10.0).unwrap();
        let rsu = RsuProfile { bandwidth_cost: 1.0, price_cap: 35.0, link };
        GameInstance::new(vec![uav], vec![rsu.clone(), rsu]).unwrap()
    }

    fn two_by_three() -> GameInstance {
        GameInstance::from_log_qualities(
            &[(12.0, 3.0, vec![0.3, 0.5]), (15.0, 4.0, vec![0.6, 0.2]), (18.0, 2.5, vec![0.4, 0.4])],
            &[(1.5, 30.0, 20.0), (2.5, 25.0, 25.0)],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_fixture_has_log_quality_ln2() {
        assert!((symmetric().quality(0, 0) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_warmup_gives_zero_observations() {
        let mut env = PricingEnv::new(two_by_three(), EnvConfig { history_length: 3, ..Default::default() }).unwrap();
        let obs = env.reset(7);
        assert_eq!(obs.len(), 2);
        for o in &obs {
            assert_eq!(o.features, vec![0.0; 2 * 3 * 3]);
        }
    }

    #[test]
    fn uniform_warmup_is_seeded_and_in_range() {
        let g = two_by_three();
        let config = EnvConfig { history_length: 4, warmup: Warmup::UniformRandom, ..Default::default() };
        let mut env = PricingEnv::new(g.clone(), config).unwrap();
        let a = env.reset(11);
        let b = env.reset(11);
        assert_eq!(a, b);
        assert_ne!(a, env.reset(12));
        for (j, o) in a.iter().enumerate() {
            let low = g.rsu(j).bandwidth_cost / g.rsu(j).price_cap;
            for rec in o.features.chunks(6) {
                assert!(rec[..3].iter().all(|&x| (low..=1.0).contains(&x)), "{rec:?}");
                assert!(rec[3..].iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn equilibrium_prices_pay_point_eight() {
        let mut env = PricingEnv::new(symmetric(), EnvConfig::default()).unwrap();
        env.reset(0);
        let out = env.step(&[vec![5.0], vec![5.0]]).unwrap();
        assert!((out.rewards[0] - 0.8).abs() < 1e-9);
        assert!((out.rewards[1] - 0.8).abs() < 1e-9);
        assert!((out.demands.get(0, 0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rewards_at_cost_are_zero_and_memoryless() {
        let g = two_by_three();
        let mut env = PricingEnv::new(g.clone(), EnvConfig { episode_length: 5, ..Default::default() }).unwrap();
        env.reset(0);
        let at_cost = PriceMatrix::at_cost(&g).rows();
        assert_eq!(env.step(&at_cost).unwrap().rewards, vec![0.0, 0.0]);
        let action = vec![vec![6.0, 7.0, 8.0], vec![9.0, 4.0, 12.0]];
        let r1 = env.step(&action).unwrap().rewards;
        let r2 = env.step(&action).unwrap().rewards;
        assert_eq!(r1, r2);
    }

    #[test]
    fn rewards_match_utility_exactly() {
        let g = two_by_three();
        let mut env = PricingEnv::new(g.clone(), EnvConfig::default()).unwrap();
        env.reset(0);
        let out = env.step(&[vec![0.0, 40.0, 7.25], vec![3.0, 3.5, 100.0]]).unwrap();
        assert_eq!(out.prices.rsu_row(0), &[1.5, 30.0, 7.25]);
        assert_eq!(out.prices.rsu_row(1), &[3.0, 3.5, 25.0]);
        for j in 0..2 {
            let v = rsu_utility(&g, j, out.prices.rsu_row(j), &out.demands.rsu_column(j));
            assert_eq!(out.rewards[j].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn history_keeps_last_records_in_order() {
        let g = two_by_three();
        let config = EnvConfig { history_length: 3, episode_length: 6, ..Default::default() };
        let mut env = PricingEnv::new(g.clone(), config).unwrap();
        env.reset(0);
        let actions: Vec<Vec<Vec<f64>>> =
            (0..4).map(|k| vec![vec![2.0 + k as f64; 3], vec![3.0 + k as f64; 3]]).collect();
        let mut last = None;
        for (k, a) in actions.iter().enumerate() {
            let out = env.step(a).unwrap();
            let o = &out.next_observations[0].features;
            // record slots oldest first; the newest is the action just taken
            let filled = (k + 1).min(3);
            for slot in 0..3 {
                let rec = &o[slot * 6..slot * 6 + 3];
                if slot < 3 - filled {
                    assert_eq!(rec, &[0.0; 3]);
                } else {
                    let step = k + 1 + slot - 3;
                    assert!((rec[0] - actions[step][0][0] / 30.0).abs() < 1e-15);
                }
            }
            last = Some(out);
        }
        assert!(!last.unwrap().done);
    }

    #[test]
    fn episode_ends_after_fixed_horizon() {
        let mut env = PricingEnv::new(
            two_by_three(),
            EnvConfig { history_length: 2, episode_length: 2, ..Default::default() },
        )
        .unwrap();
        env.reset(0);
        let a = vec![vec![5.0; 3]; 2];
        assert!(!env.step(&a).unwrap().done);
        assert!(env.step(&a).unwrap().done);
        assert_eq!(env.step(&a), Err(EnvError::EpisodeFinished));
        env.reset(0);
        assert!(env.step(&a).is_ok());
    }

    #[test]
    fn malformed_actions_are_rejected() {
        let mut env = PricingEnv::new(two_by_three(), EnvConfig::default()).unwrap();
        env.reset(0);
        assert!(matches!(env.step(&[vec![1.0; 3]]), Err(EnvError::ActionShape { .. })));
        assert!(matches!(
            env.step(&[vec![1.0, f64::NAN, 1.0], vec![1.0; 3]]),
            Err(EnvError::NonFinitePrice { rsu: 0, uav: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        let g = two_by_three();
        assert!(PricingEnv::new(g.clone(), EnvConfig { history_length: 0, ..Default::default() }).is_err());
        assert!(PricingEnv::new(g.clone(), EnvConfig { history_length: 20, ..Default::default() }).is_err());
        assert!(PricingEnv::new(g.clone(), EnvConfig { price_scale: Some(vec![1.0]), ..Default::default() }).is_err());
        assert!(PricingEnv::new(g, EnvConfig { demand_scale: Some(0.0), ..Default::default() }).is_err());
    }

    #[test]
    fn demand_scale_bounds_slack_demand() {
        let g = two_by_three();
        let scale = default_demand_scale(&g);
        for i in 0..3 {
            for j in 0..2 {
                let u = g.uav(i);
                let b = u.delta * g.quality(i, j) / g.rsu(j).bandwidth_cost;
                assert!(b <= scale);
            }
        }
    }

    #[test]
    fn baselines() {
        let b = theoretical_baseline(&symmetric()).unwrap();
        assert!((b.value - 0.8).abs() < 1e-9 && b.consistent);
        let dead = GameInstance::from_log_qualities(&[(10.0, 2.0, vec![-0.1])], &[(1.0, 35.0, 10.0)]).unwrap();
        assert_eq!(theoretical_baseline(&dead).unwrap().value, 0.0);
        assert!(theoretical_baseline(&two_by_three()).unwrap().value >= 0.0);
    }
}
