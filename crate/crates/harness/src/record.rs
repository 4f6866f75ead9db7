//! What one run leaves behind.

use serde::{Deserialize, Serialize};
use tinymarl_core::agents::{Algorithm, EpisodeStats};
use tinymarl_core::game::VerificationReport;

use crate::config::SweepParameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Solve,
    Train,
}

/// Grid coordinate of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub clean: bool,
    pub leader_probes: usize,
    pub follower_probes: usize,
    pub leader_violations: usize,
    pub follower_violations: usize,
    pub max_relative_leader_gain: f64,
}

impl From<&VerificationReport> for VerificationSummary {
    fn from(r: &VerificationReport) -> Self {
        VerificationSummary {
            clean: r.is_clean(),
            leader_probes: r.leader_probes,
            follower_probes: r.follower_probes,
            leader_violations: r.leader_violations.len(),
            follower_violations: r.follower_violations.len(),
            max_relative_leader_gain: r.max_relative_leader_gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub kind: RunKind,
    pub algorithm: Option<Algorithm>,
    pub config_hash: String,
    pub seed: u64,
    pub sweep: Option<SweepPoint>,
    /// Empty for solve runs.
    pub episodes: Vec<EpisodeStats>,
    /// Mean of the last tenth of the episodes for training runs; the
    /// equilibrium average RSU utility for solve runs.
    pub average_reward: f64,
    pub theoretical: f64,
    pub theoretical_consistent: bool,
    pub verification: Option<VerificationSummary>,
    pub wall_ms: u64,
}

impl RunRecord {
    /// Deterministic identifier built from the run's coordinates.
    pub fn make_id(kind: RunKind, algorithm: Option<Algorithm>, sweep: Option<SweepPoint>, seed: u64) -> String {
        let mut id = match (kind, algorithm) {
            (RunKind::Train, Some(a)) => format!("train-{a}"),
            (RunKind::Train, None) => "train".to_string(),
            (RunKind::Solve, _) => "solve".to_string(),
        };
        if let Some(p) = sweep {
            id = format!("{}={}-{id}", p.parameter.as_str(), p.value);
        }
        format!("{id}-s{seed}")
    }

    /// Sort key used before emission.
    pub fn key(&self) -> (Option<u64>, RunKind, Option<Algorithm>, u64) {
        (self.sweep.map(|p| p.value.to_bits()), self.kind, self.algorithm, self.seed)
    }

    /// Inconsistent equilibrium or failed verification.
    pub fn is_flagged(&self) -> bool {
        !self.theoretical_consistent || self.verification.as_ref().is_some_and(|v| !v.clean)
    }

    pub fn sparsity_trajectory(&self) -> Vec<Option<f64>> {
        self.episodes.iter().map(|e| e.sparsity).collect()
    }

    /// First episode count after which the trailing `window`-episode mean
    /// reaches `fraction` of the theoretical value.
    pub fn episodes_to_fraction(&self, fraction: f64, window: usize) -> Option<usize> {
        episodes_to_fraction(&self.episodes, self.theoretical, fraction, window)
    }
}

/// Mean per-episode average over the last tenth (at least one) of `episodes`.
pub fn final_average(episodes: &[EpisodeStats]) -> f64 {
    if episodes.is_empty() {
        return f64::NAN;
    }
    let n = episodes.len().div_ceil(10);
    episodes[episodes.len() - n..].iter().map(|e| e.average).sum::<f64>() / n as f64
}

pub fn episodes_to_fraction(episodes: &[EpisodeStats], theoretical: f64, fraction: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let target = fraction * theoretical;
    (window..=episodes.len()).find(|&end| {
        let mean = episodes[end - window..end].iter().map(|e| e.average).sum::<f64>() / window as f64;
        mean >= target
    })
}
