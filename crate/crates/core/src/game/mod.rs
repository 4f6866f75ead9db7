//! The leader/follower bandwidth-pricing game.
//!
//! RSUs (leaders) post per-UAV unit bandwidth prices inside a `[cost, cap]`
//! box; each UAV (follower) then buys the bandwidth bundle maximising
//!
//! ```text
//! U_i = sum_j  delta_i * ln(1 + b_ij * q_j) * S_ij  -  p_ij * b_ij
//! ```
//!
//! subject to `b_ij >= 0` and `sum_j p_ij b_ij <= R_i`, where `q_j` is the
//! spectrum efficiency of RSU `j` and `S_ij = ln(SSIM_ij / SSIM_i^th)` is the
//! log-quality of the link. RSU `j` earns `V_j = sum_i (p_ij - c_j) b_ij`.
//!
//! Because `V_j` is a sum of per-UAV terms and the follower problem of UAV `i`
//! only involves the prices posted to `i`, the leader subgame splits into `I`
//! independent `J`-player pricing games, which [`solve_equilibrium`] solves
//! side by side.

mod equilibrium;
mod follower;
mod leader;
mod types;
mod utility;
mod verify;

pub use equilibrium::{
    solve_equilibrium, solve_equilibrium_with, solve_uav_subgame, Diagnostic, EquilibriumSolution, SolverConfig,
    UavEquilibrium,
};
pub use follower::{
    all_followers_respond, all_followers_respond_with, follower_best_response, BudgetCase, FollowerSolution,
};
pub use leader::{
    best_response_price, leader_best_response_map, leader_best_response_unclamped, leader_unconstrained_price,
    BestResponse,
};
pub use types::{
    ChannelLink, DemandMatrix, GameInstance, PriceMatrix, RsuProfile, SsimTriple, SsimWeights, UavProfile,
};
pub use utility::{immersion_metric, log_quality, rsu_utility, spectrum_efficiency, ssim, uav_utility};
pub use verify::{verify_equilibrium, FollowerViolation, LeaderViolation, VerificationReport, VerifyConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("invalid game parameter: {0}")]
    Invalid(String),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("shape mismatch: expected {expected}")]
    ShapeMismatch { expected: String },
    #[error("price {price} for RSU {rsu} / UAV {uav} outside [{low}, {high}]")]
    PriceOutOfBox { rsu: usize, uav: usize, price: f64, low: f64, high: f64 },
    #[error("link to RSU {rsu} has zero SSIM and cannot carry demand")]
    UnusableLink { rsu: usize },
    #[error("RSU {rsu} has no profitable price for UAV {uav} (non-positive log-quality)")]
    NoProfitablePrice { rsu: usize, uav: usize },
}

impl GameError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GameError::Invalid(msg.into())
    }

    pub(crate) fn context(self, ctx: String) -> Self {
        match self {
            GameError::Invalid(m) => GameError::Invalid(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
