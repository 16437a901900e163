//! Commons harvest: apples regrow only near other apples.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{
    closest_agent_features, nearest_features, own_features, resolve_moves, spawn_points, Avatar, Dir, GridConfig,
    MOVE_LABELS,
};
use crate::contract::{pay_to_others, ContractSpace, TransferRule};
use crate::error::{Error, Result};
use crate::game::{Action, ActionSpace, MarkovGame};

pub const MAX_FINE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestConfig {
    pub grid: GridConfig,
    pub horizon: usize,
    pub discount: f64,
    pub regrow_radius: f64,
    /// Respawn probability for 0, 1-2, 3-5 and 6+ apples within `regrow_radius`.
    pub regrow_probs: [f64; 4],
    pub density_radius: f64,
    /// Consumption with fewer other apples than this within `density_radius` is fined.
    pub density_threshold: usize,
    /// Append every agent's local apple density to each observation.
    pub density_features: bool,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { width: 15, height: 15 },
            horizon: 1000,
            discount: 0.99,
            regrow_radius: 2.0,
            regrow_probs: [0.0, 0.005, 0.02, 0.05],
            density_radius: 5.0,
            density_threshold: 4,
            density_features: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub avatars: Vec<Avatar>,
    pub apples: Vec<bool>,
    /// Cleanup only; empty for Harvest.
    pub waste: Vec<bool>,
    pub eaten_last: Vec<u32>,
    pub t: usize,
}

impl GridState {
    pub fn apple_count(&self) -> usize {
        self.apples.iter().filter(|&&a| a).count()
    }

    pub fn waste_count(&self) -> usize {
        self.waste.iter().filter(|&&w| w).count()
    }

    pub fn occupied(&self, x: usize, y: usize) -> bool {
        self.avatars.iter().any(|a| a.x == x && a.y == y)
    }
}

#[derive(Clone, Debug)]
pub struct Harvest {
    n: usize,
    cfg: HarvestConfig,
    orchard: Vec<bool>,
    spawns: Vec<(usize, usize)>,
    space: ActionSpace,
}

/// Diamond patches of radius 2 on a staggered lattice.
fn orchard_layout(grid: &GridConfig) -> Vec<bool> {
    let mut out = vec![false; grid.cells()];
    for y in 0..grid.height {
        for x in 0..grid.width {
            let on_lattice = (x % 8 == 3 && y % 8 == 3) || (x % 8 == 7 && y % 8 == 7);
            if !on_lattice {
                continue;
            }
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if dx.abs() + dy.abs() <= 2 && nx >= 0 && ny >= 0 && (nx as usize) < grid.width && (ny as usize) < grid.height {
                        out[grid.index(nx as usize, ny as usize)] = true;
                    }
                }
            }
        }
    }
    out
}

impl Harvest {
    pub fn new(n: usize, cfg: HarvestConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("harvest needs at least one agent".into()));
        }
        cfg.grid.validate()?;
        if cfg.horizon == 0 || !(cfg.discount > 0.0 && cfg.discount < 1.0) {
            return Err(Error::InvalidParameter("bad horizon or discount".into()));
        }
        if cfg.regrow_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("regrow probabilities must lie in [0, 1]".into()));
        }
        let orchard = orchard_layout(&cfg.grid);
        let spawns = spawn_points(&cfg.grid, n, &|x, y| orchard[cfg.grid.index(x, y)])?;
        let space = ActionSpace::discrete(MOVE_LABELS)?;
        Ok(Self { n, cfg, orchard, spawns, space })
    }

    pub fn config(&self) -> &HarvestConfig {
        &self.cfg
    }

    pub fn orchard(&self) -> &[bool] {
        &self.orchard
    }

    /// Respawn probability of an empty cell with `k` apples nearby.
    pub fn regrow_probability(&self, k: usize) -> f64 {
        let p = &self.cfg.regrow_probs;
        match k {
            0 => p[0],
            1..=2 => p[1],
            3..=5 => p[2],
            _ => p[3],
        }
    }

    fn count_within(&self, apples: &[bool], x: usize, y: usize, radius: f64) -> usize {
        self.cfg.grid.disc(x, y, radius).filter(|&i| apples[i]).count()
    }

    /// Apples within the density radius of `(x, y)`, the cell itself excluded.
    pub fn local_density(&self, apples: &[bool], x: usize, y: usize) -> usize {
        let own = usize::from(apples[self.cfg.grid.index(x, y)]);
        self.count_within(apples, x, y, self.cfg.density_radius) - own
    }

    /// Movement and consumption. Returns the moved avatars and, per agent,
    /// the cell index of the apple it ate.
    pub fn consume(&self, state: &GridState, actions: &[Action]) -> (Vec<Avatar>, Vec<Option<usize>>) {
        let choices: Vec<usize> = actions.iter().map(Action::index).collect();
        let avatars = resolve_moves(&self.cfg.grid, &state.avatars, &choices, state.t);
        let eaten = avatars
            .iter()
            .map(|a| {
                let idx = self.cfg.grid.index(a.x, a.y);
                state.apples[idx].then_some(idx)
            })
            .collect();
        (avatars, eaten)
    }
}

impl MarkovGame for Harvest {
    type State = GridState;

    fn num_agents(&self) -> usize {
        self.n
    }

    fn action_space(&self, _agent: usize) -> &ActionSpace {
        &self.space
    }

    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> GridState {
        let avatars = self.spawns.iter().map(|&(x, y)| Avatar { x, y, dir: Dir::North }).collect();
        GridState { avatars, apples: self.orchard.clone(), waste: Vec::new(), eaten_last: vec![0; self.n], t: 0 }
    }

    fn transition(&self, state: &GridState, actions: &[Action], rng: &mut ChaCha8Rng) -> GridState {
        let (avatars, eaten) = self.consume(state, actions);
        let mut apples = state.apples.clone();
        for idx in eaten.iter().flatten() {
            apples[*idx] = false;
        }
        let before = apples.clone();
        let grid = &self.cfg.grid;
        for idx in 0..grid.cells() {
            if !self.orchard[idx] || before[idx] {
                continue;
            }
            let (x, y) = grid.coords(idx);
            // One draw per candidate cell keeps the stream layout fixed.
            let u: f64 = rng.random();
            if avatars.iter().any(|a| a.x == x && a.y == y) {
                continue;
            }
            if u < self.regrow_probability(self.count_within(&before, x, y, self.cfg.regrow_radius)) {
                apples[idx] = true;
            }
        }
        GridState {
            avatars,
            apples,
            waste: Vec::new(),
            eaten_last: eaten.iter().map(|e| u32::from(e.is_some())).collect(),
            t: state.t + 1,
        }
    }

    fn reward(&self, state: &GridState, actions: &[Action]) -> Vec<f64> {
        let (_, eaten) = self.consume(state, actions);
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

    /// Own position and orientation, closest agent, nearest apple, close
    /// apples, total apples, last-step consumption of every agent and,
    /// optionally, every agent's local density.
    fn observe(&self, state: &GridState, agent: usize) -> Vec<f64> {
        let grid = &self.cfg.grid;
        let me = state.avatars[agent];
        let disc_size = grid.disc(grid.width / 2, grid.height / 2, self.cfg.density_radius).count() as f64;
        let orchard_size = self.orchard.iter().filter(|&&o| o).count().max(1) as f64;
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend(own_features(grid, me));
        obs.extend(closest_agent_features(grid, &state.avatars, agent));
        obs.extend(nearest_features(grid, me, &state.apples));
        obs.push(self.count_within(&state.apples, me.x, me.y, self.cfg.density_radius) as f64 / disc_size);
        obs.push(state.apple_count() as f64 / orchard_size);
        obs.extend(state.eaten_last.iter().map(|&e| f64::from(e)));
        if self.cfg.density_features {
            for a in &state.avatars {
                obs.push(self.count_within(&state.apples, a.x, a.y, self.cfg.density_radius) as f64 / disc_size);
            }
        }
        obs
    }

    fn observation_dim(&self) -> usize {
        6 + 6 + 3 + 2 + self.n + if self.cfg.density_features { self.n } else { 0 }
    }
}

/// Fine `theta` on each apple eaten where fewer than the threshold of other
/// apples remain close by, paid evenly to the others.
#[derive(Clone, Debug)]
pub struct LowDensityFine {
    game: Harvest,
}

impl TransferRule<GridState> for LowDensityFine {
    fn family_id(&self) -> &str {
        "low_density_fine"
    }

    fn transfers(&self, params: &[f64], state: &GridState, actions: &[Action]) -> Vec<f64> {
        let mut out = vec![0.0; actions.len()];
        let (_, eaten) = self.game.consume(state, actions);
        let grid = &self.game.cfg.grid;
        for (i, idx) in eaten.iter().enumerate() {
            if let Some(idx) = idx {
                let (x, y) = grid.coords(*idx);
                if self.game.local_density(&state.apples, x, y) < self.game.cfg.density_threshold {
                    pay_to_others(&mut out, i, params[0]);
                }
            }
        }
        out
    }
}

pub fn make_harvest(n: usize, cfg: HarvestConfig) -> Result<(Harvest, ContractSpace<GridState>)> {
    let game = Harvest::new(n, cfg)?;
    let space = ContractSpace::new(Arc::new(LowDensityFine { game: game.clone() }), vec![(0.0, MAX_FINE)], n)?;
    Ok((game, space))
}
