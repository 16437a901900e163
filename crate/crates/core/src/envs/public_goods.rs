//! Repeated public goods game with continuous investments.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::contract::{pay_to_all, ContractSpace, TransferRule};
use crate::error::{Error, Result};
use crate::game::{Action, ActionSpace, MarkovGame};

pub const MULTIPLIER: f64 = 1.2;
pub const HORIZON: usize = 100;
pub const DISCOUNT: f64 = 0.99;
pub const MAX_TAX: f64 = 1.2;

#[derive(Clone, Debug)]
pub struct PublicGoods {
    n: usize,
    horizon: usize,
    space: ActionSpace,
}

impl PublicGoods {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_horizon(n, HORIZON)
    }

    pub fn with_horizon(n: usize, horizon: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("public goods needs N >= 2, got {n}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(Self { n, horizon, space: ActionSpace::continuous(0.0, 1.0)? })
    }

    pub fn payoffs(n: usize, investments: &[f64]) -> Vec<f64> {
        let pot = MULTIPLIER * investments.iter().sum::<f64>() / n as f64;
        investments.iter().map(|a| pot - a).collect()
    }
}

impl MarkovGame for PublicGoods {
    /// The round counter.
    type State = usize;

    fn num_agents(&self) -> usize {
        self.n
    }

    fn action_space(&self, _agent: usize) -> &ActionSpace {
        &self.space
    }

    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> usize {
        0
    }

    fn transition(&self, state: &usize, _actions: &[Action], _rng: &mut ChaCha8Rng) -> usize {
        state + 1
    }

    fn reward(&self, _state: &usize, actions: &[Action]) -> Vec<f64> {
        let inv: Vec<f64> = actions.iter().map(|a| a.value(0)).collect();
        Self::payoffs(self.n, &inv)
    }

    fn is_terminal(&self, state: &usize) -> bool {
        *state >= self.horizon
    }

    fn discount(&self) -> f64 {
        DISCOUNT
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reward_bound(&self) -> f64 {
        MULTIPLIER * (self.n - 1) as f64 / self.n as f64
    }

    fn observe(&self, state: &usize, _agent: usize) -> Vec<f64> {
        vec![*state as f64 / self.horizon as f64]
    }

    fn observation_dim(&self) -> usize {
        1
    }
}

/// Tax `theta * (1 - a_i)` on each agent's shortfall, redistributed evenly
/// among all agents.
#[derive(Clone, Debug, Default)]
pub struct ShortfallTax;

impl<S> TransferRule<S> for ShortfallTax {
    fn family_id(&self) -> &str {
        "shortfall_tax"
    }

    fn transfers(&self, params: &[f64], _state: &S, actions: &[Action]) -> Vec<f64> {
        let mut out = vec![0.0; actions.len()];
        for (i, a) in actions.iter().enumerate() {
            pay_to_all(&mut out, i, params[0] * (1.0 - a.value(0)));
        }
        out
    }
}

pub fn make_public_goods(n: usize) -> Result<(PublicGoods, ContractSpace<usize>)> {
    let game = PublicGoods::new(n)?;
    let space = ContractSpace::new(Arc::new(ShortfallTax), vec![(0.0, MAX_TAX)], n)?;
    Ok((game, space))
}
