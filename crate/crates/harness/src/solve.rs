//! Exact contracting equilibria of one-shot stage games.

use contracting_core::envs::{make_pd, make_public_goods, make_stag_hunt, MatrixGame, MatrixState};
use contracting_core::equilibrium::{
    enumerate_pure_nash, max_welfare_bruteforce, solve_contract_spe, verify_social_optimality, SpeSolution, StageGame,
    OptimalityReport,
};
use contracting_core::{ContractSpace, Lane, MarkovGame, SeedStream};
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// The environment's transfer rule.
    Rule,
    /// The rule plus a signing transfer.
    RuleWithSigning,
    /// Only the null contract.
    Null,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveRequest {
    pub env: String,
    pub agents: usize,
    pub family: Family,
    pub grid_step: f64,
    /// Investment levels for the public goods game.
    pub levels: Vec<f64>,
    pub canonical_stag_hunt: bool,
}

impl SolveRequest {
    pub fn new(env: impl Into<String>, agents: usize) -> Self {
        Self { env: env.into(), agents, family: Family::Rule, grid_step: 0.25, levels: vec![0.0, 1.0], canonical_stag_hunt: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutput {
    pub nash: Vec<Vec<String>>,
    pub optimum: (Vec<String>, f64),
    pub solution: SpeSolution,
    pub optimality: OptimalityReport,
}

fn family<S>(stage: &StageGame<S>, space: ContractSpace<S>, family: Family) -> Result<ContractSpace<S>>
where
    S: Clone,
{
    Ok(match family {
        Family::Rule => space,
        Family::RuleWithSigning => {
            let (lo, hi) = stage.signing_range();
            space.with_signing(lo, hi)?
        }
        Family::Null => ContractSpace::null_only(stage.num_agents()),
    })
}

fn solve_stage<S: Clone>(stage: StageGame<S>, space: ContractSpace<S>, req: &SolveRequest) -> Result<SolveOutput> {
    let space = family(&stage, space, req.family)?;
    let solution = solve_contract_spe(&stage, &space, req.grid_step)?;
    let optimality = verify_social_optimality(&solution, &stage);
    let nash = enumerate_pure_nash(&stage).iter().map(|p| stage.profile_labels(p)).collect();
    let (best, w) = max_welfare_bruteforce(&stage);
    Ok(SolveOutput { nash, optimum: (stage.profile_labels(&best), w), solution, optimality })
}

fn matrix(pair: (MatrixGame, ContractSpace<MatrixState>), req: &SolveRequest) -> Result<SolveOutput> {
    let stage = StageGame::from_matrix(&pair.0)?;
    solve_stage(stage, pair.1, req)
}

/// Solve the one-shot contracting game of a matrix or public goods
/// environment by backward induction.
pub fn solve(req: &SolveRequest) -> Result<SolveOutput> {
    let cfg = |e: contracting_core::Error| HarnessError::Config(e.to_string());
    match req.env.as_str() {
        "pd" => matrix(make_pd(req.agents).map_err(cfg)?, req),
        "stag_hunt" if req.agents == 2 => matrix(make_stag_hunt(req.canonical_stag_hunt)?, req),
        "public_goods" => {
            let (game, space) = make_public_goods(req.agents).map_err(cfg)?;
            let state = game.initial_state(&mut SeedStream::new(0).rng(0, Lane::Init));
            let stage = StageGame::from_levels(&game, state, &req.levels).map_err(cfg)?;
            solve_stage(stage, space, req)
        }
        other => Err(HarnessError::Config(format!(
            "solve supports pd, stag_hunt (2 agents) and public_goods; got {other} with {} agents",
            req.agents
        ))),
    }
}

impl std::fmt::Display for SolveOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = &self.solution;
        writeln!(f, "pure Nash equilibria: {:?}", self.nash)?;
        writeln!(f, "social optimum: {:?} welfare {}", self.optimum.0, self.optimum.1)?;
        writeln!(f, "family: {} (grid step {}), proposer {}", s.family, s.grid_step, s.proposer)?;
        match &s.params {
            Some(p) => writeln!(f, "proposed contract: {p:?}, acceptance {:?}", s.acceptance)?,
            None => writeln!(f, "proposed contract: null")?,
        }
        writeln!(f, "play: {:?}", s.profile_labels)?;
        writeln!(f, "values: {:?}, welfare {}", s.values, s.welfare)?;
        writeln!(f, "rejection values: {:?}", s.rejection_values)?;
        write!(
            f,
            "optimality gap {} (tolerance {}): {}",
            self.optimality.gap,
            self.optimality.tolerance,
            if self.optimality.holds { "holds" } else { "fails" }
        )
    }
}
