//! Experiment configuration files.
//!
//! A config is a TOML document describing one experiment grid. A top-level
//! `include` key (a path or a list of paths, relative to the including file)
//! pulls in other documents first; keys in the including file win, and
//! nested tables merge key by key.
//!
//! ```toml
//! include = "base.toml"
//! name = "pd-small"
//! agents = [2]
//! algorithms = ["separate", "contracting"]
//! seeds = [0, 1, 2, 3, 4]
//! budget = 200000
//!
//! [env]
//! id = "pd"
//!
//! [hyperparams]
//! optimizer = "adam"
//! lr = 0.0005
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use contracting_learn::{Algorithm, Hyperparams};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::envs;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub id: String,
    /// Environment-specific settings; unknown keys are rejected.
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub params: Table,
}

impl EnvSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), params: Table::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    #[serde(default = "default_agents")]
    pub agents: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Environment steps per run; defaults per environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Gift bound for the gifting baseline; defaults per environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gift: Option<f64>,
    /// Overrides applied on top of the environment's default hyperparameters.
    #[serde(default, skip_serializing_if = "Table::is_empty")]
    pub hyperparams: Table,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Number of cells trained concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_agents() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, env: EnvSpec, algorithms: Vec<Algorithm>) -> Self {
        Self {
            name: name.into(),
            env,
            agents: default_agents(),
            algorithms,
            seeds: default_seeds(),
            budget: None,
            max_gift: None,
            hyperparams: Table::new(),
            output: default_output(),
            workers: default_workers(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    fn from_table(mut table: Table) -> Result<Self> {
        if table.remove("include").is_some() {
            return Err(HarnessError::Config("include is only supported when loading from a file".into()));
        }
        Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Serialize(e.to_string()))
    }

    /// Load a config file, resolving includes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let table = load_table(path.as_ref(), &mut Vec::new())?;
        Self::from_table(table)
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or_else(|| envs::default_budget(&self.env.id))
    }

    /// Hyperparameters for this experiment's environment with overrides.
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        envs::hyperparams(&self.env.id, &self.hyperparams)
    }

    /// Check everything a run needs, without training.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return err(format!("invalid experiment name '{}'", self.name));
        }
        if self.agents.is_empty() || self.algorithms.is_empty() || self.seeds.is_empty() {
            return err("agents, algorithms and seeds must be non-empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return err(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.agents.iter().collect::<BTreeSet<_>>().len() != self.agents.len() {
            return err(format!("agent counts must be distinct, got {:?}", self.agents));
        }
        if self.algorithms.iter().collect::<BTreeSet<_>>().len() != self.algorithms.len() {
            return err("algorithms must be distinct".into());
        }
        if self.workers == 0 {
            return err("workers must be at least 1".into());
        }
        if let Some(g) = self.max_gift {
            if !(g >= 0.0 && g.is_finite()) {
                return err(format!("max_gift must be finite and >= 0, got {g}"));
            }
        }
        self.hyperparams()?;
        for &n in &self.agents {
            envs::check(&self.env, n)?;
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_table(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Table> {
    let canonical = path.canonicalize().map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    if stack.contains(&canonical) {
        return Err(HarnessError::Config(format!("include cycle through {}", path.display())));
    }
    let mut table: Table =
        read(path)?.parse().map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(HarnessError::Config(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(HarnessError::Config(format!("include must be a path or a list, got {other}"))),
    };
    stack.push(canonical);
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = Table::new();
    for inc in includes {
        merge(&mut merged, load_table(&dir.join(inc), stack)?);
    }
    stack.pop();
    merge(&mut merged, table);
    Ok(merged)
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_tables_merge() {
        let mut a: Table = "x = 1\n[t]\na = 1\nb = 2".parse().unwrap();
        let b: Table = "y = 2\n[t]\nb = 3".parse().unwrap();
        merge(&mut a, b);
        let want: Table = "x = 1\ny = 2\n[t]\na = 1\nb = 3".parse().unwrap();
        assert_eq!(a, want);
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml("name = \"a\"\nalgorithms = [\"separate\"]\n[env]\nid = \"pd\"").unwrap();
        assert_eq!(c.agents, vec![2, 4, 8]);
        assert_eq!(c.seeds.len(), 5);
        assert_eq!(c.budget(), 200_000);
        c.validate().unwrap();
    }
}
