//! Bandwidth pricing between RSUs (leaders) and UAVs (followers): the exact
//! equilibrium machinery, a multi-agent pricing environment built on it, a
//! small prunable MLP, and PPO-based pricing agents with dynamic structured
//! pruning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod env;
pub mod game;
pub mod par;
pub mod rng;
pub mod tinynet;
