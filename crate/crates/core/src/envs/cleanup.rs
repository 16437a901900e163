//! Cleanup: apples only grow while the river is kept clean.

use std::sync::Arc;

use rand::seq::IteratorRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{
    closest_agent_features, nearest_features, neighbor, own_features, resolve_moves, spawn_points, Avatar, Dir,
    GridConfig, MOVE_LABELS,
};
use super::harvest::GridState;
use crate::contract::{ContractSpace, TransferRule};
use crate::error::{Error, Result};
use crate::game::{Action, ActionSpace, MarkovGame};

pub const CLEAN: usize = 7;
pub const MAX_BOUNTY: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanupConfig {
    pub grid: GridConfig,
    pub horizon: usize,
    pub discount: f64,
    pub waste_spawn_prob: f64,
    pub apple_spawn_prob: f64,
    pub depletion_threshold: f64,
    pub initial_waste_fraction: f64,
}

impl Default for CleanupConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { width: 18, height: 9 },
            horizon: 1000,
            discount: 0.99,
            waste_spawn_prob: 0.5,
            apple_spawn_prob: 0.05,
            depletion_threshold: 0.4,
            initial_waste_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cleanup {
    n: usize,
    cfg: CleanupConfig,
    river: Vec<bool>,
    orchard: Vec<bool>,
    spawns: Vec<(usize, usize)>,
    space: ActionSpace,
}

impl Cleanup {
    pub fn new(n: usize, cfg: CleanupConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("cleanup needs at least one agent".into()));
        }
        cfg.grid.validate()?;
        let probs_ok = [cfg.waste_spawn_prob, cfg.apple_spawn_prob, cfg.initial_waste_fraction]
            .iter()
            .all(|p| (0.0..=1.0).contains(p));
        if !probs_ok || cfg.depletion_threshold <= 0.0 || cfg.horizon == 0 || !(cfg.discount > 0.0 && cfg.discount < 1.0) {
            return Err(Error::InvalidParameter(format!("bad cleanup parameters: {cfg:?}")));
        }
        let g = cfg.grid;
        let river_cols = (g.width / 6).max(1);
        let orchard_from = g.width - (g.width / 3).max(1);
        let river: Vec<bool> = (0..g.cells()).map(|i| g.coords(i).0 < river_cols).collect();
        let orchard: Vec<bool> = (0..g.cells()).map(|i| g.coords(i).0 >= orchard_from).collect();
        let mid = g.width / 2;
        let spawns = spawn_points(&g, n, &|x, _| x != mid)
            .or_else(|_| spawn_points(&g, n, &|x, y| river[g.index(x, y)] || orchard[g.index(x, y)]))?;
        let space = ActionSpace::discrete(MOVE_LABELS.iter().copied().chain(["clean"]))?;
        Ok(Self { n, cfg, river, orchard, spawns, space })
    }

    pub fn config(&self) -> &CleanupConfig {
        &self.cfg
    }

    pub fn river(&self) -> &[bool] {
        &self.river
    }

    pub fn orchard(&self) -> &[bool] {
        &self.orchard
    }

    pub fn river_size(&self) -> usize {
        self.river.iter().filter(|&&r| r).count()
    }

    pub fn waste_fraction(&self, waste: &[bool]) -> f64 {
        waste.iter().filter(|&&w| w).count() as f64 / self.river_size() as f64
    }

    /// Apple spawn probability per empty orchard cell.
    pub fn apple_probability(&self, waste_fraction: f64) -> f64 {
        let scale = (1.0 - waste_fraction / self.cfg.depletion_threshold).clamp(0.0, 1.0);
        self.cfg.apple_spawn_prob * scale
    }

    fn cleaned_cell(&self, me: &Avatar, waste: &[bool]) -> Option<usize> {
        let g = &self.cfg.grid;
        let own = g.index(me.x, me.y);
        if waste[own] {
            return Some(own);
        }
        neighbor(g, me.x, me.y, me.dir).map(|(x, y)| g.index(x, y)).filter(|&i| waste[i])
    }

    /// Movement, cleaning and eating. Returns the new avatars, the waste
    /// cell each agent cleaned and the apple cell each agent ate.
    pub fn resolve(&self, state: &GridState, actions: &[Action]) -> (Vec<Avatar>, Vec<Option<usize>>, Vec<Option<usize>>) {
        let choices: Vec<usize> = actions.iter().map(Action::index).collect();
        let avatars = resolve_moves(&self.cfg.grid, &state.avatars, &choices, state.t);
        let mut waste = state.waste.clone();
        let mut cleaned = vec![None; self.n];
        for k in 0..self.n {
            let i = (state.t + k) % self.n;
            if choices[i] == CLEAN {
                if let Some(c) = self.cleaned_cell(&avatars[i], &waste) {
                    waste[c] = false;
                    cleaned[i] = Some(c);
                }
            }
        }
        let eaten = avatars
            .iter()
            .map(|a| {
                let idx = self.cfg.grid.index(a.x, a.y);
                state.apples[idx].then_some(idx)
            })
            .collect();
        (avatars, cleaned, eaten)
    }
}

impl MarkovGame for Cleanup {
    type State = GridState;

    fn num_agents(&self) -> usize {
        self.n
    }

    fn action_space(&self, _agent: usize) -> &ActionSpace {
        &self.space
    }

    /// Empty orchard; every other river cell polluted up to the initial fraction.
    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> GridState {
        let avatars = self.spawns.iter().map(|&(x, y)| Avatar { x, y, dir: Dir::West }).collect();
        let target = (self.cfg.initial_waste_fraction * self.river_size() as f64).round() as usize;
        let river_cells: Vec<usize> = (0..self.river.len()).filter(|&i| self.river[i]).collect();
        let mut waste = vec![false; self.river.len()];
        let stride = if target == 0 { 1 } else { (river_cells.len() / target).max(1) };
        for &c in river_cells.iter().step_by(stride).take(target) {
            waste[c] = true;
        }
        GridState { avatars, apples: vec![false; self.river.len()], waste, eaten_last: vec![0; self.n], t: 0 }
    }

    fn transition(&self, state: &GridState, actions: &[Action], rng: &mut ChaCha8Rng) -> GridState {
        let (avatars, cleaned, eaten) = self.resolve(state, actions);
        let mut waste = state.waste.clone();
        for c in cleaned.iter().flatten() {
            waste[*c] = false;
        }
        let mut apples = state.apples.clone();
        for a in eaten.iter().flatten() {
            apples[*a] = false;
        }
        let spawn_waste: f64 = rng.random();
        let clean_cells = (0..waste.len()).filter(|&i| self.river[i] && !waste[i]);
        if spawn_waste < self.cfg.waste_spawn_prob {
            if let Some(c) = clean_cells.choose(rng) {
                waste[c] = true;
            }
        }
        let p = self.apple_probability(self.waste_fraction(&waste));
        let g = &self.cfg.grid;
        for idx in 0..apples.len() {
            if !self.orchard[idx] || apples[idx] {
                continue;
            }
            let u: f64 = rng.random();
            let (x, y) = g.coords(idx);
            if u < p && !avatars.iter().any(|a| a.x == x && a.y == y) {
                apples[idx] = true;
            }
        }
        GridState {
            avatars,
            apples,
            waste,
            eaten_last: eaten.iter().map(|e| u32::from(e.is_some())).collect(),
            t: state.t + 1,
        }
    }

    fn reward(&self, state: &GridState, actions: &[Action]) -> Vec<f64> {
        let (_, _, eaten) = self.resolve(state, actions);
        eaten.iter().map(|e| if e.is_some() { 1.0 } else { 0.0 }).collect()
    }

    fn is_terminal(&self, state: &GridState) -> bool {
        state.t >= self.cfg.horizon
    }

    fn discount(&self) -> f64 {
        self.cfg.discount
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    /// Own position and orientation, closest agent, nearest apple, nearest
    /// waste, apple count and waste count.
    fn observe(&self, state: &GridState, agent: usize) -> Vec<f64> {
        let g = &self.cfg.grid;
        let me = state.avatars[agent];
        let orchard_size = self.orchard.iter().filter(|&&o| o).count() as f64;
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend(own_features(g, me));
        obs.extend(closest_agent_features(g, &state.avatars, agent));
        obs.extend(nearest_features(g, me, &state.apples));
        obs.extend(nearest_features(g, me, &state.waste));
        obs.push(state.apple_count() as f64 / orchard_size);
        obs.push(state.waste_count() as f64 / self.river_size() as f64);
        obs
    }

    fn observation_dim(&self) -> usize {
        20
    }
}

/// Bounty `theta` per cleaned waste cell, funded evenly by the other agents.
#[derive(Clone, Debug)]
pub struct CleaningBounty {
    game: Cleanup,
}

impl TransferRule<GridState> for CleaningBounty {
    fn family_id(&self) -> &str {
        "cleaning_bounty"
    }

    fn transfers(&self, params: &[f64], state: &GridState, actions: &[Action]) -> Vec<f64> {
        let n = actions.len();
        let mut out = vec![0.0; n];
        let (_, cleaned, _) = self.game.resolve(state, actions);
        for (i, c) in cleaned.iter().enumerate() {
            if c.is_some() {
                out[i] += params[0];
                let share = params[0] / (n - 1) as f64;
                for (j, o) in out.iter_mut().enumerate() {
                    if j != i {
                        *o -= share;
                    }
                }
            }
        }
        out
    }
}

pub fn make_cleanup(n: usize, cfg: CleanupConfig) -> Result<(Cleanup, ContractSpace<GridState>)> {
    let game = Cleanup::new(n, cfg)?;
    let space = ContractSpace::new(Arc::new(CleaningBounty { game: game.clone() }), vec![(0.0, MAX_BOUNTY)], n)?;
    Ok((game, space))
}
