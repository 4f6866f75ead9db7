use super::{ChannelLink, GameError, GameInstance, SsimTriple, UavProfile};

pub fn spectrum_efficiency(link: &ChannelLink) -> f64 {
    link.spectrum_efficiency()
}

pub fn ssim(triple: &SsimTriple) -> f64 {
    triple.ssim()
}

/// `ln(SSIM / threshold)`; errors for a zero-SSIM link.
pub fn log_quality(uav: &UavProfile, rsu: usize) -> Result<f64, GameError> {
    uav.log_quality(rsu)
}

/// The satisfaction-weighted immersion term `delta * ln(1 + b q) * S` of one link.
///
/// Zero demand contributes nothing, even on an unusable link.
pub fn immersion_metric(instance: &GameInstance, uav: usize, rsu: usize, demand: f64) -> f64 {
    if demand == 0.0 {
        return 0.0;
    }
    let q = instance.spectrum_efficiency(rsu);
    instance.uav(uav).delta * (demand * q).ln_1p() * instance.quality(uav, rsu)
}

/// Follower utility of UAV `uav` for a demand row and the prices it faces.
pub fn uav_utility(instance: &GameInstance, uav: usize, demand_row: &[f64], price_row: &[f64]) -> f64 {
    demand_row
        .iter()
        .zip(price_row)
        .enumerate()
        .map(|(j, (&b, &p))| immersion_metric(instance, uav, j, b) - p * b)
        .sum()
}

/// Leader utility `sum_i (p_i - c) b_i` of RSU `rsu`.
pub fn rsu_utility(instance: &GameInstance, rsu: usize, price_row: &[f64], demand_column: &[f64]) -> f64 {
    let c = instance.rsu(rsu).bandwidth_cost;
    price_row.iter().zip(demand_column).map(|(&p, &b)| (p - c) * b).sum()
}
