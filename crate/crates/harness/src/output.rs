//! CSV, JSONL and summary files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tinymarl_core::agents::Algorithm;

use crate::experiment::{mean_sd, SweepAggregate};
use crate::record::{RunKind, RunRecord};

pub const CSV_COLUMNS: [&str; 9] =
    ["run_id", "seed", "episode", "agent_id", "reward", "avg_reward", "sparsity", "theoretical", "wall_ms"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl ToString) -> OutputError {
    OutputError::Format { path: path.to_path_buf(), message: message.to_string() }
}

/// One CSV line: a training record gives one row per episode and agent, a
/// solve record a single row with `episode = 0` and no agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub seed: u64,
    pub episode: usize,
    pub agent_id: Option<usize>,
    pub reward: f64,
    pub avg_reward: f64,
    pub sparsity: Option<f64>,
    pub theoretical: f64,
    pub wall_ms: u64,
}

pub fn csv_rows(records: &[RunRecord]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for r in records {
        if r.kind == RunKind::Solve || r.episodes.is_empty() {
            rows.push(CsvRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                episode: 0,
                agent_id: None,
                reward: r.average_reward,
                avg_reward: r.average_reward,
                sparsity: None,
                theoretical: r.theoretical,
                wall_ms: r.wall_ms,
            });
            continue;
        }
        for e in &r.episodes {
            for (j, &reward) in e.rewards.iter().enumerate() {
                rows.push(CsvRow {
                    run_id: r.run_id.clone(),
                    seed: r.seed,
                    episode: e.episode,
                    agent_id: Some(j),
                    reward,
                    avg_reward: e.average,
                    sparsity: e.sparsity,
                    theoretical: r.theoretical,
                    wall_ms: r.wall_ms,
                });
            }
        }
    }
    rows
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text for `records`; the same records always give the same bytes.
pub fn to_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for row in csv_rows(records) {
        w.write_record([
            row.run_id,
            row.seed.to_string(),
            row.episode.to_string(),
            opt(row.agent_id),
            row.reward.to_string(),
            row.avg_reward.to_string(),
            opt(row.sparsity),
            row.theoretical.to_string(),
            row.wall_ms.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>, OutputError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format_err(origin, e))?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(format_err(origin, format!("unexpected header {header:?}")));
    }
    reader.deserialize().map(|row| row.map_err(|e| format_err(origin, e))).collect()
}

pub fn to_jsonl(records: &[RunRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serialises") + "\n").collect()
}

pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Vec<RunRecord>, OutputError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format_err(origin, format!("line {}: {e}", n + 1))))
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>, OutputError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io_err(path))?);
        text.push('\n');
    }
    parse_jsonl(&text, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub final_average_mean: f64,
    pub final_average_sd: f64,
    pub final_average_median: f64,
    pub theoretical_mean: f64,
    /// Mean final average over mean theoretical value, in percent.
    pub percent_of_theoretical: f64,
    /// Median episodes until the trailing 10-episode mean first reaches 80%
    /// of the theoretical value, over the runs that reach it.
    pub median_episodes_to_80_percent: Option<f64>,
    pub runs_reaching_80_percent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub runs: usize,
    pub average_mean: f64,
    pub average_sd: f64,
    pub inconsistent: usize,
    pub verification_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub solve: Option<SolveSummary>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub sweep: Vec<SweepAggregate>,
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(config_hash: &str, records: &[RunRecord], sweep: &[SweepAggregate]) -> Summary {
    let solves: Vec<&RunRecord> = records.iter().filter(|r| r.kind == RunKind::Solve).collect();
    let solve = (!solves.is_empty()).then(|| {
        let xs: Vec<f64> = solves.iter().map(|r| r.average_reward).collect();
        let (average_mean, average_sd) = mean_sd(&xs);
        SolveSummary {
            runs: solves.len(),
            average_mean,
            average_sd,
            inconsistent: solves.iter().filter(|r| !r.theoretical_consistent).count(),
            verification_failures: solves.iter().filter(|r| r.verification.as_ref().is_some_and(|v| !v.clean)).count(),
        }
    });
    let mut by_algo: BTreeMap<Algorithm, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == RunKind::Train) {
        if let Some(a) = r.algorithm {
            by_algo.entry(a).or_default().push(r);
        }
    }
    let algorithms = by_algo
        .into_iter()
        .map(|(algorithm, runs)| {
            let finals: Vec<f64> = runs.iter().map(|r| r.average_reward).collect();
            let theory: Vec<f64> = runs.iter().map(|r| r.theoretical).collect();
            let reach: Vec<f64> = runs.iter().filter_map(|r| r.episodes_to_fraction(0.8, 10)).map(|e| e as f64).collect();
            let (final_average_mean, final_average_sd) = mean_sd(&finals);
            let (theoretical_mean, _) = mean_sd(&theory);
            AlgorithmSummary {
                algorithm,
                runs: runs.len(),
                final_average_mean,
                final_average_sd,
                final_average_median: median(&finals).unwrap_or(f64::NAN),
                theoretical_mean,
                percent_of_theoretical: 100.0 * final_average_mean / theoretical_mean,
                median_episodes_to_80_percent: median(&reach),
                runs_reaching_80_percent: reach.len(),
            }
        })
        .collect();
    Summary { config_hash: config_hash.to_string(), solve, algorithms, sweep: sweep.to_vec() }
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

/// Paths written by [`emit_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub csv: PathBuf,
    pub jsonl: PathBuf,
    pub summary: PathBuf,
    pub sweep: Option<PathBuf>,
}

/// Write `runs.csv`, `runs.jsonl` and `summary.json` into `dir`, plus
/// `sweep.csv` when there are sweep aggregates. Records are sorted by key
/// first.
pub fn emit_results(
    dir: &Path,
    config_hash: &str,
    records: &[RunRecord],
    sweep: &[SweepAggregate],
) -> Result<Emitted, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut sorted = records.to_vec();
    sorted.sort_by_key(RunRecord::key);
    let out = Emitted {
        csv: dir.join("runs.csv"),
        jsonl: dir.join("runs.jsonl"),
        summary: dir.join("summary.json"),
        sweep: (!sweep.is_empty()).then(|| dir.join("sweep.csv")),
    };
    write_file(&out.csv, &to_csv(&sorted))?;
    write_file(&out.jsonl, &to_jsonl(&sorted))?;
    let summary = summarize(config_hash, &sorted, sweep);
    write_file(&out.summary, &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"))?;
    if let Some(path) = &out.sweep {
        write_file(path, &sweep_csv(sweep))?;
    }
    Ok(out)
}

pub fn sweep_csv(aggregates: &[SweepAggregate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "value", "kind", "algorithm", "runs", "mean", "sd"]).expect("in-memory write");
    for a in aggregates {
        let kind = match a.kind {
            RunKind::Solve => "solve",
            RunKind::Train => "train",
        };
        w.write_record([
            a.parameter.as_str().to_string(),
            a.value.to_string(),
            kind.to_string(),
            opt(a.algorithm),
            a.runs.to_string(),
            a.mean.to_string(),
            a.sd.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
