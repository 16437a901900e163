//! Metrics CSV: one row per training iteration per run.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use contracting_learn::{Algorithm, TrainReport};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const COLUMNS: [&str; 11] = [
    "run_id",
    "env",
    "algorithm",
    "num_agents",
    "seed",
    "iteration",
    "env_steps",
    "social_reward",
    "per_agent_rewards",
    "contract_params",
    "acceptance_rate",
];

/// List cells hold `;`-separated numbers.
const SEP: char = ';';

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub env: String,
    pub algorithm: Algorithm,
    pub num_agents: usize,
    pub seed: u64,
    pub iteration: usize,
    pub env_steps: u64,
    pub social_reward: f64,
    pub per_agent_rewards: String,
    pub contract_params: String,
    pub acceptance_rate: Option<f64>,
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(&SEP.to_string())
}

pub fn split(cell: &str) -> Result<Vec<f64>> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(SEP)
        .map(|s| s.parse().map_err(|_| HarnessError::Serialize(format!("bad number '{s}' in list cell"))))
        .collect()
}

impl MetricsRow {
    pub fn agent_rewards(&self) -> Result<Vec<f64>> {
        split(&self.per_agent_rewards)
    }

    pub fn params(&self) -> Result<Vec<f64>> {
        split(&self.contract_params)
    }
}

pub fn rows_from_report(run_id: &str, report: &TrainReport) -> Vec<MetricsRow> {
    report
        .iterations
        .iter()
        .map(|it| MetricsRow {
            run_id: run_id.to_string(),
            env: report.env.clone(),
            algorithm: report.algorithm,
            num_agents: report.num_agents,
            seed: report.seed,
            iteration: it.iteration,
            env_steps: it.env_steps,
            social_reward: it.social_reward,
            per_agent_rewards: join(&it.agent_rewards),
            contract_params: it.contract_params.as_deref().map(join).unwrap_or_default(),
            acceptance_rate: it.acceptance_rate,
        })
        .collect()
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(HarnessError::Serialize(format!("{} has columns {header:?}, expected {COLUMNS:?}", path.display())));
    }
    reader.deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

/// Appends runs to a metrics CSV, replacing rows of a run written before.
pub struct MetricsStore {
    path: PathBuf,
    runs: BTreeSet<String>,
}

impl MetricsStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let runs = if path.exists() { read_rows(&path)?.into_iter().map(|r| r.run_id).collect() } else { BTreeSet::new() };
        Ok(Self { path, runs })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, run_id: &str) -> bool {
        self.runs.contains(run_id)
    }

    pub fn append(&mut self, run_id: &str, rows: &[MetricsRow]) -> Result<()> {
        if self.runs.contains(run_id) {
            let kept: Vec<MetricsRow> = read_rows(&self.path)?.into_iter().filter(|r| r.run_id != run_id).collect();
            self.rewrite(&kept)?;
        }
        let fresh = !self.path.exists();
        let file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| HarnessError::io(&self.path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            w.write_record(COLUMNS)?;
        }
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| HarnessError::io(&self.path, e))?;
        self.runs.insert(run_id.to_string());
        Ok(())
    }

    fn rewrite(&self, rows: &[MetricsRow]) -> Result<()> {
        let tmp = self.path.with_extension("csv.tmp");
        {
            let file = File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(COLUMNS)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| HarnessError::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(|e| HarnessError::io(&self.path, e))
    }
}
