//! Per-cell learning curves aggregated over seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contracting_learn::Algorithm;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::mean_std;
use crate::metrics::read_rows;

/// Which cells to export; `None` matches everything.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellSelector {
    pub env: Option<String>,
    pub num_agents: Option<usize>,
    pub algorithm: Option<Algorithm>,
}

impl std::fmt::Display for CellSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let any = |o: Option<String>| o.unwrap_or_else(|| "*".into());
        write!(
            f,
            "env={} agents={} algorithm={}",
            any(self.env.clone()),
            any(self.num_agents.map(|n| n.to_string())),
            any(self.algorithm.map(|a| a.to_string()))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub env_steps: f64,
    pub seeds: usize,
    pub mean_social: f64,
    pub std_social: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub env: String,
    pub num_agents: usize,
    pub algorithm: Algorithm,
    pub points: Vec<SeriesPoint>,
    pub path: PathBuf,
}

/// Write one CSV per (env, agents, algorithm) into `out_dir` with the mean
/// and standard deviation of social reward over seeds at each iteration.
pub fn export_plot_data(metrics: impl AsRef<Path>, selector: &CellSelector, out_dir: impl AsRef<Path>) -> Result<Vec<Series>> {
    let rows = read_rows(metrics)?;
    let mut groups: BTreeMap<(String, usize, Algorithm), BTreeMap<usize, Vec<(f64, f64)>>> = BTreeMap::new();
    for r in rows {
        let keep = selector.env.as_ref().is_none_or(|e| *e == r.env)
            && selector.num_agents.is_none_or(|n| n == r.num_agents)
            && selector.algorithm.is_none_or(|a| a == r.algorithm);
        if keep {
            groups
                .entry((r.env, r.num_agents, r.algorithm))
                .or_default()
                .entry(r.iteration)
                .or_default()
                .push((r.social_reward, r.env_steps as f64));
        }
    }
    if groups.is_empty() {
        return Err(HarnessError::EmptySelection(selector.to_string()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut out = Vec::new();
    for ((env, num_agents, algorithm), iterations) in groups {
        let points: Vec<SeriesPoint> = iterations
            .into_iter()
            .map(|(iteration, vals)| {
                let social: Vec<f64> = vals.iter().map(|v| v.0).collect();
                let (mean_social, std_social) = mean_std(&social);
                let env_steps = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
                SeriesPoint { iteration, env_steps, seeds: vals.len(), mean_social, std_social }
            })
            .collect();
        let path = out_dir.join(format!("{env}_n{num_agents}_{algorithm}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for p in &points {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
        out.push(Series { env, num_agents, algorithm, points, path });
    }
    Ok(out)
}
