#![allow(dead_code)]

use std::collections::HashMap;

use contracting_core::game::cartesian;
use contracting_core::{Action, ActionSpace, FiniteMarkovGame, MarkovGame};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Finite game given by explicit tables. States `0..num_states`; the last
/// one is terminal.
#[derive(Clone, Debug)]
pub struct TableGame {
    pub num_states: usize,
    pub spaces: Vec<ActionSpace>,
    /// `(state, profile) -> [(next, prob)]`
    pub support: HashMap<(usize, Vec<usize>), Vec<(usize, f64)>>,
    pub rewards: HashMap<(usize, Vec<usize>), Vec<f64>>,
    pub horizon: usize,
    pub discount: f64,
}

impl TableGame {
    pub fn profiles(&self) -> Vec<Vec<usize>> {
        let sets: Vec<Vec<usize>> = self.spaces.iter().map(|s| (0..s.num_choices()).collect()).collect();
        cartesian(&sets)
    }

    fn key(state: usize, actions: &[Action]) -> (usize, Vec<usize>) {
        (state, actions.iter().map(Action::index).collect())
    }

    /// Random game from a seed: each (state, profile) gets a support of up
    /// to `max_support` next states and integer rewards in `[-3, 3]`.
    pub fn random(seed: u64, num_states: usize, choices: &[usize], max_support: usize, horizon: usize) -> Self {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let spaces: Vec<ActionSpace> = choices
            .iter()
            .map(|&k| ActionSpace::discrete((0..k).map(|j| format!("a{j}"))).unwrap())
            .collect();
        let mut game = Self {
            num_states,
            spaces,
            support: HashMap::new(),
            rewards: HashMap::new(),
            horizon,
            discount: 0.9,
        };
        for s in 0..num_states - 1 {
            for p in game.profiles() {
                let k = rng.random_range(1..=max_support);
                let mut nexts: Vec<usize> = Vec::new();
                while nexts.len() < k {
                    let c = rng.random_range(0..num_states);
                    if !nexts.contains(&c) {
                        nexts.push(c);
                    }
                }
                let weights: Vec<f64> = nexts.iter().map(|_| rng.random_range(1..=4) as f64).collect();
                let total: f64 = weights.iter().sum();
                let supp = nexts.into_iter().zip(weights.into_iter().map(|w| w / total)).collect();
                let r = (0..choices.len()).map(|_| rng.random_range(-3..=3) as f64).collect();
                game.support.insert((s, p.clone()), supp);
                game.rewards.insert((s, p), r);
            }
        }
        game
    }
}

impl MarkovGame for TableGame {
    type State = usize;

    fn num_agents(&self) -> usize {
        self.spaces.len()
    }

    fn action_space(&self, agent: usize) -> &ActionSpace {
        &self.spaces[agent]
    }

    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> usize {
        0
    }

    fn transition(&self, state: &usize, actions: &[Action], rng: &mut ChaCha8Rng) -> usize {
        let supp = &self.support[&Self::key(*state, actions)];
        let mut u: f64 = rng.random();
        for (s, p) in supp {
            if u < *p {
                return *s;
            }
            u -= p;
        }
        supp[supp.len() - 1].0
    }

    fn reward(&self, state: &usize, actions: &[Action]) -> Vec<f64> {
        self.rewards
            .get(&Self::key(*state, actions))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.num_agents()])
    }

    fn is_terminal(&self, state: &usize) -> bool {
        *state == self.num_states - 1
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reward_bound(&self) -> f64 {
        3.0
    }

    fn observe(&self, state: &usize, _agent: usize) -> Vec<f64> {
        vec![*state as f64]
    }

    fn observation_dim(&self) -> usize {
        1
    }
}

impl FiniteMarkovGame for TableGame {
    fn states(&self) -> Vec<usize> {
        (0..self.num_states).collect()
    }

    fn transition_support(&self, state: &usize, actions: &[Action]) -> Vec<(usize, f64)> {
        self.support.get(&Self::key(*state, actions)).cloned().unwrap_or_default()
    }
}

pub fn discrete(profile: &[usize]) -> Vec<Action> {
    profile.iter().map(|&a| Action::discrete(a)).collect()
}
