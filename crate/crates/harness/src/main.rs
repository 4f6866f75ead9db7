use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use tinymarl_core::agents::Algorithm;
use tinymarl_harness::experiment::{run_compare, run_solve, run_sweep};
use tinymarl_harness::output::emit_results;
use tinymarl_harness::{ExperimentConfig, RunRecord};

#[derive(Parser)]
#[command(name = "tinymarl", version, about = "Bandwidth-pricing equilibria and learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and verify the equilibrium for every seed.
    Solve(Common),
    /// Train one algorithm (default tiny_madrl) for every seed.
    Train(Common),
    /// Run the sweep described in the config.
    Sweep(Common),
    /// Train every configured algorithm for every seed.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Algorithm(s), comma separated: tiny_madrl, ppo, greedy, random.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<Algorithm>,
    /// Fail when an equilibrium is inconsistent or verification finds a
    /// violation.
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            config.output = out.clone();
        }
        if !self.algo.is_empty() {
            config.algorithms = self.algo.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn flagged(records: &[RunRecord]) -> Vec<&str> {
    records.iter().filter(|r| r.is_flagged()).map(|r| r.run_id.as_str()).collect()
}

fn run(cli: Cli) -> Result<bool> {
    let (common, mut config) = match &cli.command {
        Command::Solve(c) | Command::Train(c) | Command::Sweep(c) | Command::Compare(c) => (c, c.config()?),
    };
    if matches!(cli.command, Command::Train(_)) && common.algo.is_empty() {
        config.algorithms = vec![Algorithm::TinyMadrl];
    }
    let hash = config.hash();
    info!("config {hash}");
    let (records, aggregates) = match &cli.command {
        Command::Solve(_) => {
            let records = config.seeds.iter().map(|&s| run_solve(&config, s)).collect::<Result<Vec<_>, _>>()?;
            (records, Vec::new())
        }
        Command::Train(_) | Command::Compare(_) => (run_compare(&config)?, Vec::new()),
        Command::Sweep(_) => {
            let Some(spec) = &config.sweep else {
                bail!("the sweep command needs a [sweep] table in the config");
            };
            let outcome = run_sweep(&config, spec)?;
            (outcome.records, outcome.aggregates)
        }
    };
    let dir = &config.output;
    let written = emit_results(dir, &hash, &records, &aggregates)?;
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, config.to_toml()).with_context(|| format!("writing {}", config_path.display()))?;
    info!("wrote {} and {}", written.csv.display(), written.summary.display());
    let bad = flagged(&records);
    if !bad.is_empty() {
        warn!("flagged runs: {}", bad.join(", "));
        if common.strict {
            eprintln!("strict mode: {} run(s) failed equilibrium checks: {}", bad.len(), bad.join(", "));
            return Ok(false);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
