//! Grid runner: every (agents, algorithm, seed) cell of a config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use contracting_learn::Algorithm;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EnvSpec, ExperimentConfig};
use crate::envs::{train_cell, Train};
use crate::error::{HarnessError, Result};
use crate::metrics::{rows_from_report, MetricsRow, MetricsStore};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CELLS_DIR: &str = "cells";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub num_agents: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
}

/// Everything that determines a run's output.
#[derive(Serialize)]
struct RunKey<'a> {
    env: &'a EnvSpec,
    cell: &'a Cell,
    budget: u64,
    max_gift: Option<f64>,
    hyperparams: &'a contracting_learn::Hyperparams,
}

/// Completion marker of a cell, also its final result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub run_id: String,
    pub env: String,
    pub num_agents: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub env_steps: u64,
    pub final_social: f64,
    pub final_rewards: Vec<f64>,
    pub acceptance_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub env: String,
    pub num_agents: usize,
    pub algorithm: Algorithm,
    pub seeds: usize,
    pub mean_social: f64,
    pub std_social: f64,
    pub run_ids: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub dir: PathBuf,
    pub cells: Vec<SummaryCell>,
    pub results: Vec<CellResult>,
    /// Cells skipped because a completion marker existed.
    pub resumed: usize,
}

impl Summary {
    pub fn cell(&self, num_agents: usize, algorithm: Algorithm) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.num_agents == num_agents && c.algorithm == algorithm)
    }
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &num_agents in &config.agents {
        for &algorithm in &config.algorithms {
            for &seed in &config.seeds {
                out.push(Cell { num_agents, algorithm, seed });
            }
        }
    }
    out
}

pub fn run_id(config: &ExperimentConfig, cell: &Cell) -> Result<String> {
    let hp = config.hyperparams()?;
    let key = RunKey { env: &config.env, cell, budget: config.budget(), max_gift: config.max_gift, hyperparams: &hp };
    let text = serde_json::to_string(&key).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(format!("{}-n{}-{}-s{}-{}", config.env.id, cell.num_agents, cell.algorithm, cell.seed, &digest[..10]))
}

pub fn experiment_dir(config: &ExperimentConfig) -> PathBuf {
    config.output.join(&config.name)
}

fn marker_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(CELLS_DIR).join(format!("{run_id}.json"))
}

fn read_marker(path: &Path) -> Result<Option<CellResult>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| HarnessError::Serialize(format!("{}: {e}", path.display())))
}

fn write_marker(path: &Path, result: &CellResult) -> Result<()> {
    let text = serde_json::to_string_pretty(result).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn train(config: &ExperimentConfig, cell: &Cell, run_id: &str) -> Result<(Vec<MetricsRow>, CellResult)> {
    let hp = config.hyperparams()?;
    let report = train_cell(
        &config.env,
        cell.num_agents,
        Train { algorithm: cell.algorithm, hp: &hp, budget: config.budget(), seed: cell.seed, max_gift: config.max_gift },
    )?;
    let rows = rows_from_report(run_id, &report);
    let result = CellResult {
        run_id: run_id.to_string(),
        env: config.env.id.clone(),
        num_agents: cell.num_agents,
        algorithm: cell.algorithm,
        seed: cell.seed,
        env_steps: report.env_steps,
        final_social: report.final_eval.mean_social,
        final_rewards: report.final_eval.mean_rewards.clone(),
        acceptance_rate: report.acceptance_rate,
    };
    Ok((rows, result))
}

/// Run every cell of `config` that has no completion marker yet, then write
/// the summary. The config is validated before anything runs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let dir = experiment_dir(config);
    std::fs::create_dir_all(dir.join(CELLS_DIR)).map_err(|e| HarnessError::io(&dir, e))?;
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, config.to_toml()?).map_err(|e| HarnessError::io(&config_path, e))?;

    let grid = cells(config);
    let ids = grid.iter().map(|c| run_id(config, c)).collect::<Result<Vec<_>>>()?;
    let mut results: Vec<Option<CellResult>> = ids.iter().map(|id| read_marker(&marker_path(&dir, id))).collect::<Result<_>>()?;
    let resumed = results.iter().flatten().count();
    let todo: Vec<usize> = (0..grid.len()).filter(|&k| results[k].is_none()).collect();

    let mut store = MetricsStore::open(dir.join(METRICS_FILE))?;
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let mut first_error = None;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..config.workers.min(todo.len()) {
            let tx = tx.clone();
            let (next, failed, todo, grid, ids) = (&next, &failed, &todo, &grid, &ids);
            scope.spawn(move || loop {
                let slot = next.fetch_add(1, Ordering::SeqCst);
                if slot >= todo.len() || failed.load(Ordering::SeqCst) {
                    break;
                }
                let k = todo[slot];
                let out = train(config, &grid[k], &ids[k]);
                if out.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                if tx.send((slot, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Flush finished cells in grid order so the CSV does not depend on
        // worker scheduling.
        let mut pending = BTreeMap::new();
        let mut flushed = 0;
        for (slot, out) in rx {
            pending.insert(slot, out);
            while let Some(out) = pending.remove(&flushed) {
                let k = todo[flushed];
                flushed += 1;
                match out.and_then(|(rows, result)| {
                    store.append(&ids[k], &rows)?;
                    write_marker(&marker_path(&dir, &ids[k]), &result)?;
                    Ok(result)
                }) {
                    Ok(result) => results[k] = Some(result),
                    Err(e) => {
                        failed.store(true, Ordering::SeqCst);
                        first_error.get_or_insert(e);
                    }
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    let results: Vec<CellResult> = results.into_iter().flatten().collect();
    let cells = summarize(&results);
    write_summary(&dir.join(SUMMARY_FILE), &cells)?;
    Ok(Summary { dir, cells, results, resumed })
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and standard deviation of final social reward per
/// (env, agents, algorithm), in first-seen order.
pub fn summarize(results: &[CellResult]) -> Vec<SummaryCell> {
    let mut keys: Vec<(String, usize, Algorithm)> = Vec::new();
    for r in results {
        let key = (r.env.clone(), r.num_agents, r.algorithm);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(env, num_agents, algorithm)| {
            let runs: Vec<&CellResult> =
                results.iter().filter(|r| r.env == env && r.num_agents == num_agents && r.algorithm == algorithm).collect();
            let social: Vec<f64> = runs.iter().map(|r| r.final_social).collect();
            let (mean_social, std_social) = mean_std(&social);
            let run_ids = runs.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>().join(";");
            SummaryCell { env, num_agents, algorithm, seeds: runs.len(), mean_social, std_social, run_ids }
        })
        .collect()
}

fn write_summary(path: &Path, cells: &[SummaryCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Render a summary as an aligned text table.
pub fn format_summary(cells: &[SummaryCell]) -> String {
    let mut out = format!("{:<14} {:>6} {:<12} {:>5} {:>12} {:>10}\n", "env", "agents", "algorithm", "seeds", "social", "std");
    for c in cells {
        out.push_str(&format!(
            "{:<14} {:>6} {:<12} {:>5} {:>12.3} {:>10.3}\n",
            c.env, c.num_agents, c.algorithm, c.seeds, c.mean_social, c.std_social
        ));
    }
    out
}
