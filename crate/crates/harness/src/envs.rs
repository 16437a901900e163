//! Environment registry: builds games and contract families from config.

use contracting_core::envs::{
    make_cleanup, make_emergency_merge, make_harvest, make_pd, make_public_goods, make_stag_hunt, public_goods,
    CleanupConfig, HarvestConfig, MergeConfig, PublicGoods, ENV_NAMES,
};
use contracting_core::{ContractSpace, MarkovGame};
use contracting_learn::{
    train_contracting, train_gifting, train_joint, train_separate, Algorithm, Hyperparams, TrainReport,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::config::EnvSpec;
use crate::error::{HarnessError, Result};

pub const MERGE_MAX_GIFT: f64 = 10.0;

pub fn is_dynamic(id: &str) -> bool {
    matches!(id, "merge" | "harvest" | "cleanup")
}

pub fn default_budget(id: &str) -> u64 {
    if is_dynamic(id) {
        1_000_000
    } else {
        200_000
    }
}

fn known(id: &str) -> Result<()> {
    if ENV_NAMES.contains(&id) {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("unknown environment '{id}'; expected one of {}", ENV_NAMES.join(", "))))
    }
}

/// Default hyperparameters for `id` with `overrides` applied.
pub fn hyperparams(id: &str, overrides: &Table) -> Result<Hyperparams> {
    known(id)?;
    let mut hp = Hyperparams::default();
    if is_dynamic(id) {
        hp.batch_size = Hyperparams::DYNAMIC_BATCH;
    }
    let hp = overlay(&hp, overrides).map_err(|e| HarnessError::Config(format!("hyperparams: {e}")))?;
    hp.validate()?;
    Ok(hp)
}

/// Apply `overrides` to `base`, rejecting keys `base` does not have.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, overrides: &Table) -> std::result::Result<T, String> {
    let mut table = Table::try_from(base).map_err(|e| e.to_string())?;
    for (k, v) in overrides {
        if !table.contains_key(k) {
            return Err(format!("unknown key '{k}'"));
        }
        table.insert(k.clone(), v.clone());
    }
    Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())
}

fn params<T: Serialize + DeserializeOwned + Default>(spec: &EnvSpec) -> Result<T> {
    overlay(&T::default(), &spec.params).map_err(|e| HarnessError::Config(format!("env '{}' params: {e}", spec.id)))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct NoParams {}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct StagHuntParams {
    canonical: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PublicGoodsParams {
    horizon: usize,
}

impl Default for PublicGoodsParams {
    fn default() -> Self {
        Self { horizon: public_goods::HORIZON }
    }
}

/// Something to do with a constructed game and its contract family.
pub trait EnvVisitor {
    type Output;

    fn visit<G>(self, game: G, space: ContractSpace<G::State>, max_gift: f64) -> Result<Self::Output>
    where
        G: MarkovGame + Clone,
        G::State: 'static;
}

/// Build the environment described by `spec` with `n` agents and hand it to
/// `visitor` along with its contract family and default gift bound.
pub fn with_env<V: EnvVisitor>(spec: &EnvSpec, n: usize, visitor: V) -> Result<V::Output> {
    known(&spec.id)?;
    let cfg = |e: contracting_core::Error| HarnessError::Config(format!("env '{}' with {n} agents: {e}", spec.id));
    fn gift<S>(space: &ContractSpace<S>) -> f64 {
        space.param_bounds().first().map_or(0.0, |b| b.1)
    }
    match spec.id.as_str() {
        "pd" => {
            let NoParams {} = params(spec)?;
            let (g, s) = make_pd(n).map_err(cfg)?;
            let m = gift(&s);
            visitor.visit(g, s, m)
        }
        "stag_hunt" => {
            let p: StagHuntParams = params(spec)?;
            if n != 2 {
                return Err(HarnessError::Config(format!("stag_hunt is a two-agent game, got {n} agents")));
            }
            let (g, s) = make_stag_hunt(p.canonical).map_err(cfg)?;
            let m = gift(&s);
            visitor.visit(g, s, m)
        }
        "public_goods" => {
            let p: PublicGoodsParams = params(spec)?;
            let (_, s) = make_public_goods(n).map_err(cfg)?;
            let g = PublicGoods::with_horizon(n, p.horizon).map_err(cfg)?;
            let m = gift(&s);
            visitor.visit(g, s, m)
        }
        "merge" => {
            let (g, s) = make_emergency_merge(n, params::<MergeConfig>(spec)?).map_err(cfg)?;
            visitor.visit(g, s, MERGE_MAX_GIFT)
        }
        "harvest" => {
            let (g, s) = make_harvest(n, params::<HarvestConfig>(spec)?).map_err(cfg)?;
            let m = gift(&s);
            visitor.visit(g, s, m)
        }
        "cleanup" => {
            let (g, s) = make_cleanup(n, params::<CleanupConfig>(spec)?).map_err(cfg)?;
            let m = gift(&s);
            visitor.visit(g, s, m)
        }
        other => unreachable!("registered environment {other} without a constructor"),
    }
}

struct Check;

impl EnvVisitor for Check {
    type Output = ();

    fn visit<G>(self, _: G, _: ContractSpace<G::State>, _: f64) -> Result<()>
    where
        G: MarkovGame + Clone,
        G::State: 'static,
    {
        Ok(())
    }
}

/// Validate that `spec` builds with `n` agents.
pub fn check(spec: &EnvSpec, n: usize) -> Result<()> {
    with_env(spec, n, Check)
}

/// One training run.
pub struct Train<'a> {
    pub algorithm: Algorithm,
    pub hp: &'a Hyperparams,
    pub budget: u64,
    pub seed: u64,
    pub max_gift: Option<f64>,
}

impl EnvVisitor for Train<'_> {
    type Output = TrainReport;

    fn visit<G>(self, game: G, space: ContractSpace<G::State>, max_gift: f64) -> Result<TrainReport>
    where
        G: MarkovGame + Clone,
        G::State: 'static,
    {
        let (hp, b, seed) = (self.hp, self.budget, self.seed);
        let report = match self.algorithm {
            Algorithm::Separate => train_separate(&game, hp, b, seed)?,
            Algorithm::Joint => train_joint(&game, hp, b, seed)?,
            Algorithm::Gifting => train_gifting(&game, self.max_gift.unwrap_or(max_gift), hp, b, seed)?,
            Algorithm::Contracting => train_contracting(&game, &space, hp, b, seed)?,
        };
        Ok(report)
    }
}

pub fn train_cell(spec: &EnvSpec, n: usize, train: Train<'_>) -> Result<TrainReport> {
    Ok(with_env(spec, n, train)?.with_env(spec.id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_params_are_rejected() {
        let mut spec = EnvSpec::new("merge");
        spec.params.insert("merge_point".into(), Value::Float(7.0));
        check(&spec, 2).unwrap();
        spec.params.insert("bogus".into(), Value::Integer(1));
        assert!(matches!(check(&spec, 2), Err(HarnessError::Config(_))));
        assert!(check(&EnvSpec::new("stag_hunt"), 3).is_err());
        assert!(check(&EnvSpec::new("chess"), 2).is_err());
    }

    #[test]
    fn overrides_apply() {
        let t: Table = "lr = 0.001\noptimizer = \"adam\"".parse().unwrap();
        let hp = hyperparams("harvest", &t).unwrap();
        assert_eq!(hp.lr, 0.001);
        assert_eq!(hp.batch_size, Hyperparams::DYNAMIC_BATCH);
        let bad: Table = "learning_rate = 0.1".parse().unwrap();
        assert!(hyperparams("pd", &bad).is_err());
    }
}
