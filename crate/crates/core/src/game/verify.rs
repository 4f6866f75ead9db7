//! Randomised check of the two equilibrium conditions: no RSU gains from a
//! unilateral price change, and no UAV gains from a different feasible demand.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::follower::respond;
use super::leader::profit_at;
use super::{uav_utility, EquilibriumSolution, GameInstance};
use crate::par::Execution;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    /// Probes per RSU, and per UAV for the follower check.
    pub num_probes: usize,
    pub seed: u64,
    /// A gain counts as a violation when it exceeds this fraction of the
    /// current utility.
    pub rel_tol: f64,
    pub execution: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { num_probes: 1000, seed: 0, rel_tol: 1e-6, execution: Execution::available() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderViolation {
    pub rsu: usize,
    pub uav: usize,
    pub deviation_price: f64,
    pub utility: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerViolation {
    pub uav: usize,
    pub probe_demands: Vec<f64>,
    pub utility: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub leader_probes: usize,
    pub follower_probes: usize,
    pub leader_violations: Vec<LeaderViolation>,
    pub follower_violations: Vec<FollowerViolation>,
    /// Largest gain seen over all leader probes, relative to the RSU's utility.
    pub max_relative_leader_gain: f64,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.leader_violations.is_empty() && self.follower_violations.is_empty()
    }
}

fn relative_gain(gain: f64, base: f64) -> f64 {
    gain / base.abs().max(1e-12)
}

/// Probe `solution` for profitable deviations.
///
/// Demands are recomputed from the solution's prices, so a hand-edited price
/// matrix is checked against the followers' true responses. Leader probes
/// change one price `p_ij` at a time (RSU utilities are separable across
/// UAVs, so a profitable joint change implies a profitable single one); a
/// third of them are local moves within 2% of the box width, the rest uniform
/// over the box. Follower probes draw random budget-feasible demand rows,
/// again mixing local and global moves.
pub fn verify_equilibrium(
    instance: &GameInstance,
    solution: &EquilibriumSolution,
    config: &VerifyConfig,
) -> VerificationReport {
    let (jn, inn) = (instance.num_rsus(), instance.num_uavs());
    let columns: Vec<Vec<f64>> = (0..inn).map(|i| solution.prices.uav_column(i)).collect();
    let responses: Vec<Vec<f64>> = (0..inn).map(|i| respond(instance, i, &columns[i]).demands).collect();

    let leader = config.execution.map(jn, |j| {
        let mut rng = rng::stream(config.seed, "verify/leader", j as u64, 0);
        let rsu = instance.rsu(j);
        let (lo, hi) = (rsu.bandwidth_cost, rsu.price_cap);
        let base_terms: Vec<f64> = (0..inn).map(|i| (columns[i][j] - lo) * responses[i][j]).collect();
        let total: f64 = base_terms.iter().sum();
        let mut violations = Vec::new();
        let mut worst = f64::NEG_INFINITY;
        for k in 0..config.num_probes {
            let i = rng.random_range(0..inn);
            let current = columns[i][j];
            let price = if k % 3 == 0 {
                let width = 0.02 * (hi - lo);
                (current + rng.random_range(-1.0..=1.0) * width).clamp(lo, hi)
            } else {
                rng.random_range(lo..=hi)
            };
            let mut row = columns[i].clone();
            let gain = profit_at(instance, j, i, &mut row, price) - base_terms[i];
            let rel = relative_gain(gain, total);
            worst = worst.max(rel);
            if rel > config.rel_tol {
                violations.push(LeaderViolation { rsu: j, uav: i, deviation_price: price, utility: total, gain });
            }
        }
        (violations, worst)
    });

    let follower = config.execution.map(inn, |i| {
        let mut rng = rng::stream(config.seed, "verify/follower", i as u64, 0);
        let budget = instance.uav(i).budget;
        let prices = &columns[i];
        let best = &responses[i];
        let utility = uav_utility(instance, i, best, prices);
        let mut violations = Vec::new();
        for k in 0..config.num_probes {
            let probe: Vec<f64> = if k % 2 == 0 {
                // random spend shares, total spend uniform in [0, R]
                let shares: Vec<f64> = (0..jn).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = shares.iter().sum();
                let spend = budget * rng.random::<f64>();
                shares.iter().zip(prices).map(|(s, p)| spend * s / total / p).collect()
            } else {
                let mut b: Vec<f64> =
                    best.iter().map(|&b| (b * (1.0 + 0.05 * rng.random_range(-1.0..=1.0))).max(0.0)).collect();
                let spend: f64 = b.iter().zip(prices).map(|(b, p)| b * p).sum();
                if spend > budget {
                    b.iter_mut().for_each(|x| *x *= budget / spend);
                }
                b
            };
            let gain = uav_utility(instance, i, &probe, prices) - utility;
            if relative_gain(gain, utility) > config.rel_tol {
                violations.push(FollowerViolation { uav: i, probe_demands: probe, utility, gain });
            }
        }
        violations
    });

    let mut report = VerificationReport {
        leader_probes: jn * config.num_probes,
        follower_probes: inn * config.num_probes,
        max_relative_leader_gain: f64::NEG_INFINITY,
        ..Default::default()
    };
    for (v, worst) in leader {
        report.leader_violations.extend(v);
        report.max_relative_leader_gain = report.max_relative_leader_gain.max(worst);
    }
    report.follower_violations = follower.into_iter().flatten().collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::test_support::*;
    use crate::game::{all_followers_respond, solve_equilibrium, GameInstance, PriceMatrix};

    #[test]
    fn symmetric_equilibrium_survives_probes() {
        let g = symmetric_pair(2.0);
        let sol = solve_equilibrium(&g, 1e-9, 10_000).unwrap();
        let report = verify_equilibrium(&g, &sol, &VerifyConfig::default());
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.leader_probes, 2000);
    }

    #[test]
    fn perturbed_prices_are_caught() {
        let g = symmetric_pair(2.0);
        let mut sol = solve_equilibrium(&g, 1e-9, 10_000).unwrap();
        sol.prices = PriceMatrix::new(&g, vec![vec![1.0], vec![5.0]]).unwrap();
        sol.demands = all_followers_respond(&g, &sol.prices);
        let report = verify_equilibrium(&g, &sol, &VerifyConfig { num_probes: 200, ..VerifyConfig::default() });
        assert!(report.leader_violations.iter().any(|v| v.rsu == 0));
    }

    #[test]
    fn zero_surplus_has_nothing_to_gain() {
        let g = GameInstance::from_log_qualities(&[(10.0, 2.0, vec![-0.1, -0.2])], &[(1.0, 35.0, 10.0), (1.0, 35.0, 10.0)])
            .unwrap();
        let sol = solve_equilibrium(&g, 1e-9, 100).unwrap();
        let report = verify_equilibrium(&g, &sol, &VerifyConfig { num_probes: 100, ..VerifyConfig::default() });
        assert!(report.is_clean());
    }
}
