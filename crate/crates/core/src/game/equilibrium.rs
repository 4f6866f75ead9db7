use serde::{Deserialize, Serialize};

use super::follower::respond;
use super::leader::{best_response_price, phi_on_support};
use super::{
    all_followers_respond_with, rsu_utility, uav_utility, BudgetCase, DemandMatrix, GameError, GameInstance,
    PriceMatrix,
};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sup-norm price change at which the fixed-point iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Run exact best-response dynamics when the closed-form regimes disagree
    /// with the follower's actual regime.
    pub polish_mixed: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-9, max_iterations: 10_000, polish_mixed: true, execution: Execution::available() }
    }
}

/// Why a UAV subgame needed special handling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Diagnostic {
    /// No RSU has a usable link to this UAV; prices sit at cost.
    NoSurplus,
    /// Only one RSU has a usable link; its single-seller price was used.
    SingleSeller { rsu: usize },
    /// The slack-budget and binding-budget candidates both contradict the
    /// follower's actual regime; the more profitable one was kept.
    MixedCase { kept: BudgetCase, utility_inactive: f64, utility_active: f64 },
    /// Links that receive no demand at the fixed point and were taken out of
    /// the binding-budget support.
    SupportShrunk { dropped: Vec<usize> },
    /// The fixed-point iteration did not reach the tolerance.
    IterationLimit { residual: f64 },
    /// Exact best-response dynamics replaced an inconsistent candidate.
    Polished { rounds: usize, residual: f64, converged: bool },
}

/// Equilibrium of the pricing subgame around one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavEquilibrium {
    /// One price per RSU.
    pub prices: Vec<f64>,
    pub case: BudgetCase,
    /// RSUs whose price came from the binding-budget map (empty when slack).
    pub support: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub consistent: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub prices: PriceMatrix,
    pub demands: DemandMatrix,
    pub rsu_utilities: Vec<f64>,
    pub uav_utilities: Vec<f64>,
    pub per_uav_case: Vec<BudgetCase>,
    /// Largest iteration count over the UAV subgames.
    pub iterations: usize,
    /// Largest final sup-norm price change over the UAV subgames.
    pub residual: f64,
    pub consistent: bool,
    pub per_uav: Vec<UavEquilibrium>,
}

impl EquilibriumSolution {
    pub fn average_rsu_utility(&self) -> f64 {
        self.rsu_utilities.iter().sum::<f64>() / self.rsu_utilities.len() as f64
    }

    /// `(uav, diagnostic)` pairs across all subgames.
    pub fn diagnostics(&self) -> impl Iterator<Item = (usize, &Diagnostic)> {
        self.per_uav.iter().enumerate().flat_map(|(i, u)| u.diagnostics.iter().map(move |d| (i, d)))
    }
}

pub fn solve_equilibrium(
    instance: &GameInstance,
    tolerance: f64,
    max_iterations: usize,
) -> Result<EquilibriumSolution, GameError> {
    solve_equilibrium_with(instance, &SolverConfig { tolerance, max_iterations, ..SolverConfig::default() })
}

/// Solve every UAV subgame and assemble the joint solution. Demands are always
/// recomputed from the final prices by the follower solver.
pub fn solve_equilibrium_with(instance: &GameInstance, config: &SolverConfig) -> Result<EquilibriumSolution, GameError> {
    if !(config.tolerance > 0.0) {
        return Err(GameError::invalid(format!("tolerance {} must be positive", config.tolerance)));
    }
    let per_uav = config.execution.map(instance.num_uavs(), |i| solve_uav_subgame(instance, i, config));
    let prices = PriceMatrix::from_fn(instance, |j, i| per_uav[i].prices[j]);
    let (demands, per_uav_case) = all_followers_respond_with(instance, &prices, config.execution);
    let rsu_utilities =
        (0..instance.num_rsus()).map(|j| rsu_utility(instance, j, prices.rsu_row(j), &demands.rsu_column(j))).collect();
    let uav_utilities = (0..instance.num_uavs())
        .map(|i| uav_utility(instance, i, demands.uav_row(i), &prices.uav_column(i)))
        .collect();
    Ok(EquilibriumSolution {
        iterations: per_uav.iter().map(|u| u.iterations).max().unwrap_or(0),
        residual: per_uav.iter().map(|u| u.residual).fold(0.0, f64::max),
        consistent: per_uav.iter().all(|u| u.consistent),
        prices,
        demands,
        rsu_utilities,
        uav_utilities,
        per_uav_case,
        per_uav,
    })
}

fn total_profit(instance: &GameInstance, uav: usize, prices: &[f64]) -> (f64, BudgetCase) {
    let f = respond(instance, uav, prices);
    let v = prices
        .iter()
        .zip(&f.demands)
        .enumerate()
        .map(|(j, (&p, &b))| (p - instance.rsu(j).bandwidth_cost) * b)
        .sum();
    (v, f.case_label)
}

/// Equilibrium prices of all RSUs towards UAV `uav`.
///
/// 1. Try the slack-budget prices `clamp(sqrt(delta S q c))`; accept them if
///    the UAV's budget is indeed slack there.
/// 2. Otherwise iterate the clamped binding-budget map to its fixed point,
///    shrinking the support when a link ends up with no demand; accept if the
///    budget binds at the result.
/// 3. If neither candidate is self-consistent, keep the more profitable one
///    and flag it (optionally polishing it with exact best responses).
pub fn solve_uav_subgame(instance: &GameInstance, uav: usize, config: &SolverConfig) -> UavEquilibrium {
    let jn = instance.num_rsus();
    let quality = instance.quality_row(uav).to_vec();
    let positive: Vec<usize> = (0..jn).filter(|&j| quality[j] > 0.0).collect();
    let mut prices: Vec<f64> = instance.rsus().iter().map(|r| r.bandwidth_cost).collect();
    let mut diagnostics = Vec::new();

    if positive.is_empty() {
        diagnostics.push(Diagnostic::NoSurplus);
        return UavEquilibrium {
            prices,
            case: BudgetCase::BudgetInactive,
            support: Vec::new(),
            iterations: 0,
            residual: 0.0,
            consistent: true,
            diagnostics,
        };
    }

    let delta = instance.uav(uav).delta;
    for &j in &positive {
        let raw = (delta * quality[j] * instance.spectrum_efficiency(j) * instance.rsu(j).bandwidth_cost).sqrt();
        prices[j] = instance.rsu(j).clamp_price(raw);
    }
    let slack_prices = prices.clone();
    if respond(instance, uav, &slack_prices).case_label == BudgetCase::BudgetInactive {
        return UavEquilibrium {
            prices: slack_prices,
            case: BudgetCase::BudgetInactive,
            support: Vec::new(),
            iterations: 0,
            residual: 0.0,
            consistent: true,
            diagnostics,
        };
    }

    let mut support = positive.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut next = prices.clone();
    let mut fallback = Vec::new();
    loop {
        for _ in 0..config.max_iterations {
            fallback.clear();
            phi_on_support(instance, uav, &prices, &support, &mut next, &mut fallback);
            residual = 0.0;
            for &j in &support {
                next[j] = instance.rsu(j).clamp_price(next[j]);
                residual = f64::max(residual, (next[j] - prices[j]).abs());
            }
            prices.copy_from_slice(&next);
            iterations += 1;
            if residual < config.tolerance {
                break;
            }
        }
        let f = respond(instance, uav, &prices);
        if f.case_label != BudgetCase::BudgetActive {
            break;
        }
        let dropped: Vec<usize> = support.iter().copied().filter(|j| !f.support.contains(j)).collect();
        if dropped.is_empty() || dropped.len() == support.len() {
            break;
        }
        support.retain(|j| f.support.contains(j));
        diagnostics.push(Diagnostic::SupportShrunk { dropped });
    }
    if let [j] = fallback.as_slice() {
        diagnostics.push(Diagnostic::SingleSeller { rsu: *j });
    }

    let converged = residual < config.tolerance;
    if !converged {
        diagnostics.push(Diagnostic::IterationLimit { residual });
    }
    let (active_profit, active_case) = total_profit(instance, uav, &prices);
    if active_case == BudgetCase::BudgetActive && converged {
        return UavEquilibrium {
            prices,
            case: BudgetCase::BudgetActive,
            support,
            iterations,
            residual,
            consistent: true,
            diagnostics,
        };
    }

    let mut case = BudgetCase::BudgetActive;
    if active_case != BudgetCase::BudgetActive {
        // the slack candidate is known to be inconsistent at this point
        let (slack_profit, _) = total_profit(instance, uav, &slack_prices);
        let kept = if slack_profit > active_profit { BudgetCase::BudgetInactive } else { BudgetCase::BudgetActive };
        diagnostics.push(Diagnostic::MixedCase {
            kept,
            utility_inactive: slack_profit,
            utility_active: active_profit,
        });
        if kept == BudgetCase::BudgetInactive {
            prices = slack_prices;
            support.clear();
        }
        case = kept;
    }

    let mut consistent = false;
    if config.polish_mixed {
        let (rounds, polish_residual, ok) = polish(instance, uav, &positive, &mut prices, config);
        diagnostics.push(Diagnostic::Polished { rounds, residual: polish_residual, converged: ok });
        if ok {
            consistent = true;
            residual = polish_residual;
            case = respond(instance, uav, &prices).case_label;
        }
    }
    UavEquilibrium { prices, case, support, iterations, residual, consistent, diagnostics }
}

/// Gauss-Seidel best-response dynamics using the exact numeric best response.
/// Returns `(rounds, last sup-norm change, converged)`.
fn polish(
    instance: &GameInstance,
    uav: usize,
    positive: &[usize],
    prices: &mut [f64],
    config: &SolverConfig,
) -> (usize, f64, bool) {
    // the numeric argmax is only resolved to ~sqrt(eps) relative
    let tol = config.tolerance.max(1e-7);
    let max_rounds = config.max_iterations.min(500);
    let mut change = f64::INFINITY;
    for round in 1..=max_rounds {
        change = 0.0;
        for &j in positive {
            let (p, _) = best_response_price(instance, j, uav, prices);
            let scale = instance.rsu(j).price_cap.max(1.0);
            change = f64::max(change, (p - prices[j]).abs() / scale);
            prices[j] = p;
        }
        if change < tol {
            return (round, change, true);
        }
    }
    (max_rounds, change, false)
}
