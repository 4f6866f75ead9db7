use super::follower::respond;
use super::{GameError, GameInstance};

/// Output of the leader best-response map for one UAV's subgame.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    /// One price per RSU.
    pub prices: Vec<f64>,
    /// RSUs whose coordinate fell back to the single-seller price because no
    /// other RSU has a usable link to this UAV.
    pub fallback: Vec<usize>,
}

/// Profit-maximising price of RSU `rsu` towards UAV `uav` when the UAV's
/// budget is slack: `sqrt(delta S q c)`, before box clamping.
pub fn leader_unconstrained_price(instance: &GameInstance, rsu: usize, uav: usize) -> Result<f64, GameError> {
    instance.check_rsu(rsu)?;
    instance.check_uav(uav)?;
    let s = instance.quality(uav, rsu);
    if !(s > 0.0) {
        return Err(GameError::NoProfitablePrice { rsu, uav });
    }
    Ok(unconstrained(instance, rsu, uav, s))
}

fn unconstrained(instance: &GameInstance, rsu: usize, uav: usize, s: f64) -> f64 {
    (instance.uav(uav).delta * s * instance.spectrum_efficiency(rsu) * instance.rsu(rsu).bandwidth_cost).sqrt()
}

/// Best price of the only seller with a usable link: the slack-budget optimum,
/// or the price at which the UAV's unconstrained purchase exactly exhausts its
/// budget if that is higher (below it the budget binds, demand is `R / p`, and
/// profit rises with price).
pub(crate) fn monopoly_price(instance: &GameInstance, rsu: usize, uav: usize, s: f64) -> f64 {
    let u = instance.uav(uav);
    let q = instance.spectrum_efficiency(rsu);
    let kink = q * (u.delta * s - u.budget);
    unconstrained(instance, rsu, uav, s).max(kink)
}

/// Raw budget-binding best response of every RSU in `support`, written into
/// `out`. Coordinates outside `support` are left untouched.
pub(crate) fn phi_on_support(
    instance: &GameInstance,
    uav: usize,
    prices: &[f64],
    support: &[usize],
    out: &mut [f64],
    fallback: &mut Vec<usize>,
) {
    let quality = instance.quality_row(uav);
    let budget = instance.uav(uav).budget;
    let quality_sum: f64 = support.iter().map(|&k| quality[k]).sum();
    let price_over_q: f64 = support.iter().map(|&k| prices[k] / instance.spectrum_efficiency(k)).sum();
    for &j in support {
        let q = instance.spectrum_efficiency(j);
        let others_quality = quality_sum - quality[j];
        let others_price = price_over_q - prices[j] / q;
        out[j] = if support.len() < 2 || !(others_quality > 0.0) {
            fallback.push(j);
            monopoly_price(instance, j, uav, quality[j])
        } else {
            let c = instance.rsu(j).bandwidth_cost;
            (q * c * quality[j] * (budget + others_price) / others_quality).sqrt()
        };
    }
}

fn positive_support(instance: &GameInstance, uav: usize) -> Vec<usize> {
    instance
        .quality_row(uav)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// The budget-binding best-response map
/// `phi_j(p) = sqrt(q_j c_j S_j (R + sum_{k != j} p_k / q_k) / sum_{k != j} S_k)`
/// over the RSUs with a usable link, without clamping. RSUs with
/// non-positive log-quality have no profitable price and report their cost.
pub fn leader_best_response_unclamped(
    instance: &GameInstance,
    uav: usize,
    prices: &[f64],
) -> Result<BestResponse, GameError> {
    instance.check_uav(uav)?;
    let jn = instance.num_rsus();
    if prices.len() != jn {
        return Err(GameError::ShapeMismatch { expected: format!("{jn} prices") });
    }
    let mut out: Vec<f64> = instance.rsus().iter().map(|r| r.bandwidth_cost).collect();
    let mut fallback = Vec::new();
    phi_on_support(instance, uav, prices, &positive_support(instance, uav), &mut out, &mut fallback);
    Ok(BestResponse { prices: out, fallback })
}

/// [`leader_best_response_unclamped`] projected onto each RSU's price box.
pub fn leader_best_response_map(
    instance: &GameInstance,
    uav: usize,
    prices: &[f64],
) -> Result<BestResponse, GameError> {
    let mut br = leader_best_response_unclamped(instance, uav, prices)?;
    for (j, p) in br.prices.iter_mut().enumerate() {
        *p = instance.rsu(j).clamp_price(*p);
    }
    Ok(br)
}

/// Profit RSU `rsu` earns from UAV `uav` at `price`, all other prices fixed,
/// against the UAV's true best response.
pub(crate) fn profit_at(instance: &GameInstance, rsu: usize, uav: usize, row: &mut [f64], price: f64) -> f64 {
    let saved = row[rsu];
    row[rsu] = price;
    let b = respond(instance, uav, row).demands[rsu];
    row[rsu] = saved;
    (price - instance.rsu(rsu).bandwidth_cost) * b
}

/// Exact best response of RSU `rsu` towards UAV `uav` against the true
/// follower response, other prices held at `price_row`.
///
/// The profit curve is continuous and piecewise concave (one piece per
/// follower regime), so the search scores the closed-form candidates of each
/// regime, a uniform grid, and then refines the best bracket by golden
/// section. Returns `(price, profit)`.
pub fn best_response_price(instance: &GameInstance, rsu: usize, uav: usize, price_row: &[f64]) -> (f64, f64) {
    let r = instance.rsu(rsu);
    let (lo, hi) = (r.bandwidth_cost, r.price_cap);
    let mut row = price_row.to_vec();
    let s = instance.quality(uav, rsu);
    if !(s > 0.0) || hi <= lo {
        return (lo, profit_at(instance, rsu, uav, &mut row, lo));
    }

    let mut candidates = vec![lo, hi, unconstrained(instance, rsu, uav, s), monopoly_price(instance, rsu, uav, s)];
    let mut phi = row.clone();
    let mut fb = Vec::new();
    let support = positive_support(instance, uav);
    phi_on_support(instance, uav, &row, &support, &mut phi, &mut fb);
    candidates.push(phi[rsu]);

    const GRID: usize = 64;
    let step = (hi - lo) / GRID as f64;
    candidates.extend((0..=GRID).map(|k| lo + step * k as f64));

    let mut best = (lo, f64::NEG_INFINITY);
    for p in candidates {
        let p = p.clamp(lo, hi);
        let v = profit_at(instance, rsu, uav, &mut row, p);
        if v > best.1 {
            best = (p, v);
        }
    }

    // golden-section refinement inside the grid cell pair around the best point
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = profit_at(instance, rsu, uav, &mut row, x1);
    let mut f2 = profit_at(instance, rsu, uav, &mut row, x2);
    for _ in 0..80 {
        if b - a < 1e-13 * hi.max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = profit_at(instance, rsu, uav, &mut row, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = profit_at(instance, rsu, uav, &mut row, x1);
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > best.1 {
            best = (x, f);
        }
    }
    best
}
