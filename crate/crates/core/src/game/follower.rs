use serde::{Deserialize, Serialize};

use super::{DemandMatrix, GameError, GameInstance, PriceMatrix};
use crate::par::Execution;

/// Whether the follower's payment budget binds at its optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetCase {
    BudgetInactive,
    BudgetActive,
}

impl BudgetCase {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetCase::BudgetInactive => "budget_inactive",
            BudgetCase::BudgetActive => "budget_active",
        }
    }
}

/// A follower's optimal demand row for fixed prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerSolution {
    pub demands: Vec<f64>,
    pub case_label: BudgetCase,
    /// Budget multiplier; zero whenever the budget is slack.
    pub lambda: f64,
    /// RSUs receiving strictly positive demand, ascending.
    pub support: Vec<usize>,
    /// Set when the budget-active branch ended with an empty support.
    pub degenerate: bool,
}

impl FollowerSolution {
    pub fn spend(&self, price_row: &[f64]) -> f64 {
        self.demands.iter().zip(price_row).map(|(b, p)| b * p).sum()
    }
}

/// Optimal bandwidth purchase of UAV `uav` facing `price_row` (one price per RSU).
///
/// First tries the unconstrained per-link optimum `delta S / p - 1/q` (zero
/// where that is non-positive). If it overspends the budget, the budget binds:
/// the multiplier and demands are recomputed on a shrinking support, dropping
/// every link whose demand comes out non-positive, until all remaining
/// demands are strictly positive.
pub fn follower_best_response(
    instance: &GameInstance,
    uav: usize,
    price_row: &[f64],
) -> Result<FollowerSolution, GameError> {
    instance.check_uav(uav)?;
    let jn = instance.num_rsus();
    if price_row.len() != jn {
        return Err(GameError::ShapeMismatch { expected: format!("{jn} prices") });
    }
    for (j, &p) in price_row.iter().enumerate() {
        let rsu = instance.rsu(j);
        if !(p >= rsu.bandwidth_cost && p <= rsu.price_cap) {
            return Err(GameError::PriceOutOfBox {
                rsu: j,
                uav,
                price: p,
                low: rsu.bandwidth_cost,
                high: rsu.price_cap,
            });
        }
    }
    Ok(respond(instance, uav, price_row))
}

/// Unchecked follower response; prices must be positive.
pub(crate) fn respond(instance: &GameInstance, uav: usize, price_row: &[f64]) -> FollowerSolution {
    let profile = instance.uav(uav);
    let (delta, budget) = (profile.delta, profile.budget);
    let quality = instance.quality_row(uav);
    let jn = price_row.len();

    let mut demands = vec![0.0; jn];
    let mut spend = 0.0;
    for j in 0..jn {
        let (s, p, q) = (quality[j], price_row[j], instance.spectrum_efficiency(j));
        if s > 0.0 && p < delta * q * s {
            let b = delta * s / p - 1.0 / q;
            if b > 0.0 {
                demands[j] = b;
                spend += p * b;
            }
        }
    }
    if spend <= budget {
        let support = (0..jn).filter(|&j| demands[j] > 0.0).collect();
        return FollowerSolution {
            demands,
            case_label: BudgetCase::BudgetInactive,
            lambda: 0.0,
            support,
            degenerate: false,
        };
    }

    let mut support: Vec<usize> = (0..jn).filter(|&j| quality[j] > 0.0).collect();
    loop {
        if support.is_empty() {
            return FollowerSolution {
                demands: vec![0.0; jn],
                case_label: BudgetCase::BudgetInactive,
                lambda: 0.0,
                support,
                degenerate: true,
            };
        }
        let quality_sum: f64 = support.iter().map(|&j| quality[j]).sum();
        let price_over_q: f64 = support.iter().map(|&j| price_row[j] / instance.spectrum_efficiency(j)).sum();
        let lambda = delta * quality_sum / (budget + price_over_q) - 1.0;
        let scale = delta / (1.0 + lambda);
        let candidate: Vec<f64> = support
            .iter()
            .map(|&j| scale * quality[j] / price_row[j] - 1.0 / instance.spectrum_efficiency(j))
            .collect();
        if candidate.iter().all(|&b| b > 0.0) {
            let mut demands = vec![0.0; jn];
            for (&j, &b) in support.iter().zip(&candidate) {
                demands[j] = b;
            }
            fit_budget(&mut demands, price_row, budget);
            return FollowerSolution {
                demands,
                case_label: BudgetCase::BudgetActive,
                lambda: lambda.max(0.0),
                support,
                degenerate: false,
            };
        }
        support = support.into_iter().zip(candidate).filter(|&(_, b)| b > 0.0).map(|(j, _)| j).collect();
    }
}

/// Shrink `demands` until their cost no longer exceeds `budget` in floating
/// point; rounding can leave the closed-form solution a few ulps over.
fn fit_budget(demands: &mut [f64], price_row: &[f64], budget: f64) {
    let spend = |d: &[f64]| -> f64 { d.iter().zip(price_row).map(|(b, p)| b * p).sum() };
    let mut factor = 1.0;
    let mut total = spend(demands);
    while total > budget {
        factor = (factor * budget / total).min(factor * (1.0 - 4.0 * f64::EPSILON));
        let scaled: Vec<f64> = demands.iter().map(|b| b * factor).collect();
        total = spend(&scaled);
        if total <= budget {
            demands.copy_from_slice(&scaled);
        }
    }
}

/// Every UAV's best response to `prices`. Rows are independent.
pub fn all_followers_respond(instance: &GameInstance, prices: &PriceMatrix) -> DemandMatrix {
    all_followers_respond_with(instance, prices, Execution::Sequential).0
}

/// [`all_followers_respond`] with an explicit execution strategy, also
/// returning each UAV's budget case.
pub fn all_followers_respond_with(
    instance: &GameInstance,
    prices: &PriceMatrix,
    execution: Execution,
) -> (DemandMatrix, Vec<BudgetCase>) {
    let solutions = execution.map(instance.num_uavs(), |i| respond(instance, i, &prices.uav_column(i)));
    let cases = solutions.iter().map(|s| s.case_label).collect();
    let rows = solutions.into_iter().map(|s| s.demands).collect();
    let demands = DemandMatrix::from_rows(rows).expect("follower demands are non-negative");
    (demands, cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::test_support::*;
    use crate::game::uav_utility;
    use approx::assert_relative_eq;

    #[test]
    fn single_link_inactive_matches_closed_form_and_grid() {
        let g = single_link(10.0, 10.0, 100.0, 1.0, 35.0);
        let sol = follower_best_response(&g, 0, &[2.0]).unwrap();
        assert_eq!(sol.case_label, BudgetCase::BudgetInactive);
        assert_eq!(sol.lambda, 0.0);
        assert_relative_eq!(sol.demands[0], 10.0 * LN2 / 2.0 - 0.1, epsilon = 1e-12);
        assert_relative_eq!(sol.demands[0], 3.36574, epsilon = 1e-5);
        let u = uav_utility(&g, 0, &sol.demands, &[2.0]);
        let grid_best = (0..=50_000)
            .map(|k| uav_utility(&g, 0, &[k as f64 * 1e-3], &[2.0]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(u >= grid_best - 1e-12);
    }

    #[test]
    fn symmetric_pair_budget_binds() {
        let g = symmetric_pair(2.0);
        let prices = [2.0, 2.0];
        let sol = follower_best_response(&g, 0, &prices).unwrap();
        assert_eq!(sol.case_label, BudgetCase::BudgetActive);
        assert_relative_eq!(sol.demands[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(sol.demands[1], 0.5, epsilon = 1e-10);
        assert_relative_eq!(sol.spend(&prices), 2.0, epsilon = 1e-10);
        assert!(sol.lambda > 0.0);
        // constrained grid search along the budget line and inside the simplex
        let u = uav_utility(&g, 0, &sol.demands, &prices);
        let mut best = f64::NEG_INFINITY;
        for a in 0..=400 {
            for b in 0..=(400 - a) {
                let row = [a as f64 * 0.0025, b as f64 * 0.0025];
                best = best.max(uav_utility(&g, 0, &row, &prices));
            }
        }
        assert!(u >= best - 1e-12);
    }

    #[test]
    fn price_above_marginal_value_gives_zero() {
        let g = single_link(10.0, 10.0, 100.0, 1.0, 80.0);
        let sol = follower_best_response(&g, 0, &[70.0]).unwrap();
        assert_eq!(sol.demands, vec![0.0]);
        assert!(sol.support.is_empty());
    }

    #[test]
    fn water_filling_drops_weak_links() {
        // a weak second link that the binding budget squeezes out
        let g = crate::game::GameInstance::from_log_qualities(
            &[(10.0, 1.0, vec![0.7, 0.05])],
            &[(1.0, 35.0, 10.0), (1.0, 35.0, 10.0)],
        )
        .unwrap();
        let prices = [2.0, 2.0];
        let sol = follower_best_response(&g, 0, &prices).unwrap();
        assert_eq!(sol.case_label, BudgetCase::BudgetActive);
        assert_eq!(sol.support, vec![0]);
        assert_eq!(sol.demands[1], 0.0);
        assert_relative_eq!(sol.spend(&prices), 1.0, epsilon = 1e-12);
        // KKT stationarity on the support, and the dropped link has no incentive
        let (s0, s1) = (g.quality(0, 0), g.quality(0, 1));
        let marginal0 = 10.0 * 10.0 * s0 / (1.0 + sol.demands[0] * 10.0);
        assert_relative_eq!(marginal0, 2.0 * (1.0 + sol.lambda), epsilon = 1e-10);
        assert!(10.0 * 10.0 * s1 <= 2.0 * (1.0 + sol.lambda));
    }

    #[test]
    fn non_positive_quality_is_excluded() {
        let g = crate::game::GameInstance::from_log_qualities(
            &[(10.0, 1.0, vec![-0.2, f64::NEG_INFINITY, 0.5])],
            &[(1.0, 35.0, 10.0), (1.0, 35.0, 10.0), (1.0, 35.0, 10.0)],
        )
        .unwrap();
        let sol = follower_best_response(&g, 0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(sol.demands[0], 0.0);
        assert_eq!(sol.demands[1], 0.0);
        assert!(sol.demands[2] > 0.0);
    }

    #[test]
    fn rejects_out_of_box_prices() {
        let g = symmetric_pair(2.0);
        assert!(matches!(
            follower_best_response(&g, 0, &[0.5, 2.0]),
            Err(GameError::PriceOutOfBox { rsu: 0, .. })
        ));
        assert!(follower_best_response(&g, 1, &[2.0, 2.0]).is_err());
    }

    #[test]
    fn identical_uavs_get_identical_rows() {
        let g = crate::game::GameInstance::from_log_qualities(
            &[(12.0, 3.0, vec![0.4, 0.6]), (12.0, 3.0, vec![0.4, 0.6])],
            &[(1.0, 35.0, 30.0), (2.0, 35.0, 36.0)],
        )
        .unwrap();
        let prices = PriceMatrix::new(&g, vec![vec![6.0, 6.0], vec![9.0, 9.0]]).unwrap();
        let d = all_followers_respond(&g, &prices);
        assert_eq!(d.uav_row(0), d.uav_row(1));
        let single = follower_best_response(&g, 0, &prices.uav_column(0)).unwrap();
        assert_eq!(d.uav_row(0), single.demands.as_slice());
        let (par, _) = all_followers_respond_with(&g, &prices, Execution::Parallel);
        assert_eq!(par, d);
    }

    proptest::proptest! {
        #[test]
        fn spend_never_exceeds_budget(
            budget in 0.5f64..8.0,
            qualities in proptest::collection::vec(-0.05f64..0.7, 1..5),
            seed in 0u64..1000,
        ) {
            use rand::Rng;
            let rsus: Vec<(f64, f64, f64)> = (0..qualities.len()).map(|j| (1.0 + j as f64, 35.0, 8.0 + 3.0 * j as f64)).collect();
            let g = crate::game::GameInstance::from_log_qualities(&[(15.0, budget, qualities.clone())], &rsus).unwrap();
            let mut r = crate::rng::stream(seed, "test/follower", 0, 0);
            let prices: Vec<f64> = rsus.iter().map(|&(c, cap, _)| r.random_range(c..=cap)).collect();
            let sol = follower_best_response(&g, 0, &prices).unwrap();
            proptest::prop_assert!(sol.spend(&prices) <= budget);
            proptest::prop_assert!(sol.demands.iter().all(|&b| b >= 0.0));
            let j = r.random_range(0..prices.len());
            let mut raised = prices.clone();
            raised[j] = r.random_range(prices[j]..=35.0);
            let after = follower_best_response(&g, 0, &raised).unwrap();
            proptest::prop_assert!(after.demands[j] <= sol.demands[j]);
        }
    }
}
