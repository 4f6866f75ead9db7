//! Solve, train, sweep and compare runs.

use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tinymarl_core::agents::{build_agents, run_episodes, AgentError, Algorithm, TrainError};
use tinymarl_core::env::{EnvError, PricingEnv};
use tinymarl_core::game::{
    solve_equilibrium_with, verify_equilibrium, EquilibriumSolution, GameError, GameInstance, SolverConfig,
    VerifyConfig,
};
use tinymarl_core::par::Execution;
use tinymarl_core::rng::derive_seed;

use crate::config::{ConfigError, ExperimentConfig, SweepParameter, SweepSpec};
use crate::record::{final_average, RunKind, RunRecord, SweepPoint, VerificationSummary};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("game: {0}")]
    Game(#[from] GameError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("agent: {0}")]
    Agent(#[from] AgentError),
    #[error("training {algorithm} with seed {seed}: {source}")]
    Train { algorithm: Algorithm, seed: u64, source: TrainError },
}

/// Where a run's instance comes from, after sweep overrides.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    point: Option<SweepPoint>,
}

impl Cell {
    fn instance(&self, config: &ExperimentConfig, seed: u64) -> Result<GameInstance, ExperimentError> {
        let Some(point) = self.point else {
            return Ok(config.instance.build(seed)?);
        };
        let v = point.value;
        Ok(match point.parameter {
            SweepParameter::Cost => config.instance.build(seed)?.with_uniform_cost(v)?,
            SweepParameter::PriceCap => config.instance.build(seed)?.with_uniform_price_cap(v)?,
            SweepParameter::Uavs => config.instance.with_counts(Some(v as usize), None)?.build(seed)?,
            SweepParameter::Rsus => config.instance.with_counts(None, Some(v as usize))?.build(seed)?,
        })
    }
}

fn solver_config(config: &ExperimentConfig, execution: Execution) -> SolverConfig {
    SolverConfig {
        tolerance: config.solver.tolerance,
        max_iterations: config.solver.max_iterations,
        polish_mixed: config.solver.polish_mixed,
        execution,
    }
}

fn solve(config: &ExperimentConfig, instance: &GameInstance, execution: Execution) -> Result<EquilibriumSolution, ExperimentError> {
    let solution = solve_equilibrium_with(instance, &solver_config(config, execution))?;
    if !solution.consistent {
        warn!("equilibrium is not self-consistent (residual {:e})", solution.residual);
    }
    Ok(solution)
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Solve and verify the equilibrium of the instance for `seed`.
pub fn run_solve(config: &ExperimentConfig, seed: u64) -> Result<RunRecord, ExperimentError> {
    solve_cell(config, Cell::default(), seed, Execution::available())
}

fn solve_cell(config: &ExperimentConfig, cell: Cell, seed: u64, execution: Execution) -> Result<RunRecord, ExperimentError> {
    let start = Instant::now();
    let instance = cell.instance(config, seed)?;
    let solution = solve(config, &instance, execution)?;
    let report = verify_equilibrium(
        &instance,
        &solution,
        &VerifyConfig {
            num_probes: config.solver.verify_probes,
            seed: derive_seed(seed, "verify", 0),
            rel_tol: config.solver.verify_tolerance,
            execution,
        },
    );
    let verification = VerificationSummary::from(&report);
    if !verification.clean {
        warn!(
            "seed {seed}: verification found {} leader and {} follower violations",
            verification.leader_violations, verification.follower_violations
        );
    }
    let average = solution.average_rsu_utility();
    Ok(RunRecord {
        run_id: RunRecord::make_id(RunKind::Solve, None, cell.point, seed),
        kind: RunKind::Solve,
        algorithm: None,
        config_hash: config.hash(),
        seed,
        sweep: cell.point,
        episodes: Vec::new(),
        average_reward: average,
        theoretical: average,
        theoretical_consistent: solution.consistent,
        verification: Some(verification),
        wall_ms: elapsed_ms(start),
    })
}

/// Train one agent per RSU with `algorithm` on the instance for `seed`.
pub fn run_training(config: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<RunRecord, ExperimentError> {
    train_cell(config, Cell::default(), algorithm, seed, Execution::available())
}

fn train_cell(
    config: &ExperimentConfig,
    cell: Cell,
    algorithm: Algorithm,
    seed: u64,
    execution: Execution,
) -> Result<RunRecord, ExperimentError> {
    let start = Instant::now();
    let instance = cell.instance(config, seed)?;
    let solution = solve(config, &instance, execution)?;
    let mut env = PricingEnv::new(instance, config.env.clone())?;
    let mut agents = build_agents(algorithm, &env, &config.effective_agents(), seed)?;
    let episodes = run_episodes(&mut env, &mut agents, config.episodes, seed)
        .map_err(|source| ExperimentError::Train { algorithm, seed, source })?;
    let record = RunRecord {
        run_id: RunRecord::make_id(RunKind::Train, Some(algorithm), cell.point, seed),
        kind: RunKind::Train,
        algorithm: Some(algorithm),
        config_hash: config.hash(),
        seed,
        sweep: cell.point,
        average_reward: final_average(&episodes),
        episodes,
        theoretical: solution.average_rsu_utility(),
        theoretical_consistent: solution.consistent,
        verification: None,
        wall_ms: elapsed_ms(start),
    };
    info!(
        "{}: final average {:.4} vs theoretical {:.4}",
        record.run_id, record.average_reward, record.theoretical
    );
    Ok(record)
}

/// Every configured algorithm on every seed. Cells run in parallel when
/// available; the result is sorted by key.
pub fn run_compare(config: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    let cells: Vec<(Algorithm, u64)> =
        config.algorithms.iter().flat_map(|&a| config.seeds.iter().map(move |&s| (a, s))).collect();
    let mut records = Execution::available()
        .map_slice(&cells, |&(a, s)| train_cell(config, Cell::default(), a, s, Execution::Sequential))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(RunRecord::key);
    Ok(records)
}

/// Mean and sample standard deviation of one quantity at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub parameter: SweepParameter,
    pub value: f64,
    pub kind: RunKind,
    pub algorithm: Option<Algorithm>,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Solve (and optionally train) every (grid value, seed) cell of `spec`.
pub fn run_sweep(config: &ExperimentConfig, spec: &SweepSpec) -> Result<SweepOutcome, ExperimentError> {
    let seeds = if spec.seeds.is_empty() { &config.seeds } else { &spec.seeds };
    let cells: Vec<(f64, u64)> = spec.grid.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let results = Execution::available().map_slice(&cells, |&(value, seed)| {
        let cell = Cell { point: Some(SweepPoint { parameter: spec.parameter, value }) };
        let mut out = vec![solve_cell(config, cell, seed, Execution::Sequential)?];
        if let Some(algorithm) = spec.train {
            out.push(train_cell(config, cell, algorithm, seed, Execution::Sequential)?);
        }
        Ok::<_, ExperimentError>(out)
    });
    let mut records = Vec::with_capacity(cells.len());
    for r in results {
        records.extend(r?);
    }
    records.sort_by_key(RunRecord::key);
    let aggregates = aggregate(spec, &records);
    Ok(SweepOutcome { records, aggregates })
}

fn aggregate(spec: &SweepSpec, records: &[RunRecord]) -> Vec<SweepAggregate> {
    let mut kinds = vec![(RunKind::Solve, None)];
    if let Some(a) = spec.train {
        kinds.push((RunKind::Train, Some(a)));
    }
    let mut out = Vec::new();
    for &value in &spec.grid {
        for &(kind, algorithm) in &kinds {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.kind == kind && r.sweep.is_some_and(|p| p.value == value))
                .map(|r| r.average_reward)
                .collect();
            let (mean, sd) = mean_sd(&xs);
            out.push(SweepAggregate { parameter: spec.parameter, value, kind, algorithm, runs: xs.len(), mean, sd });
        }
    }
    out
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than two
/// values.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
