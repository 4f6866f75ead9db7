use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, PricingPolicy, Transition};
use crate::env::Observation;
use crate::rng::StreamRng;

/// Price levels per UAV for [`GreedyAgent`].
pub const GREEDY_LEVELS: usize = 16;

/// Uniform price row in `[low, high]`.
pub fn random_act(rng: &mut StreamRng, low: f64, high: f64, num_uavs: usize) -> Vec<f64> {
    (0..num_uavs).map(|_| if high > low { rng.random_range(low..=high) } else { low }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomAgent {
    num_uavs: usize,
    low: f64,
    high: f64,
}

impl RandomAgent {
    pub fn new(num_uavs: usize, low: f64, high: f64) -> Self {
        RandomAgent { num_uavs, low, high }
    }
}

impl PricingPolicy for RandomAgent {
    fn act(&mut self, _: &Observation, rng: &mut StreamRng) -> Vec<f64> {
        random_act(rng, self.low, self.high, self.num_uavs)
    }

    fn observe(&mut self, _: &Transition) {}
}

/// Epsilon-greedy bandit per UAV over evenly spaced price levels. The value
/// of a level is the running mean of the profit `(p - c) b` it earned from
/// that UAV. Only levels already tried compete in the greedy choice; with
/// nothing tried yet the level is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyAgent {
    low: f64,
    high: f64,
    epsilon: f64,
    /// `[uav][level]` (sum, count)
    pub(super) stats: Vec<[(f64, u64); GREEDY_LEVELS]>,
    pub(super) pending: Vec<usize>,
}

impl GreedyAgent {
    pub fn new(num_uavs: usize, low: f64, high: f64, epsilon: f64) -> Result<Self, AgentError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(AgentError::Config(format!("greedy epsilon {epsilon} not in [0, 1]")));
        }
        Ok(GreedyAgent { low, high, epsilon, stats: vec![[(0.0, 0); GREEDY_LEVELS]; num_uavs], pending: Vec::new() })
    }

    pub fn level_price(&self, level: usize) -> f64 {
        self.low + (self.high - self.low) * level as f64 / (GREEDY_LEVELS - 1) as f64
    }

    pub fn mean(&self, uav: usize, level: usize) -> Option<f64> {
        let (sum, n) = self.stats[uav][level];
        (n > 0).then(|| sum / n as f64)
    }

    fn best_level(&self, uav: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for level in 0..GREEDY_LEVELS {
            if let Some(m) = self.mean(uav, level) {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((level, m));
                }
            }
        }
        best.map(|(l, _)| l)
    }

    /// Chosen level per UAV.
    pub fn choose_levels(&mut self, rng: &mut StreamRng) -> Vec<usize> {
        (0..self.stats.len())
            .map(|i| {
                let explore = rng.random::<f64>() < self.epsilon;
                match self.best_level(i) {
                    Some(l) if !explore => l,
                    _ => rng.random_range(0..GREEDY_LEVELS),
                }
            })
            .collect()
    }
}

impl PricingPolicy for GreedyAgent {
    fn act(&mut self, _: &Observation, rng: &mut StreamRng) -> Vec<f64> {
        self.pending = self.choose_levels(rng);
        self.pending.iter().map(|&l| self.level_price(l)).collect()
    }

    fn observe(&mut self, t: &Transition) {
        for (i, &level) in self.pending.iter().enumerate() {
            let profit = (t.prices[i] - self.low) * t.demands[i];
            let entry = &mut self.stats[i][level];
            entry.0 += profit;
            entry.1 += 1;
        }
    }
}
