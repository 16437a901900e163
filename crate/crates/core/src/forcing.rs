//! Forcing contracts: zero transfers on the optimal path, a maximal fine on
//! any deviation, and a signing transfer that hands the surplus to the proposer.

use std::hash::Hash;
use std::sync::Arc;

use crate::contract::{pay_to_others, Contract, TransferRule};
use crate::error::{Error, Result};
use crate::game::{exact_values, Action, FiniteMarkovGame, JointPolicyTable, ValueVector};

pub struct ForcingRule<S> {
    target: JointPolicyTable<S>,
}

impl<S> ForcingRule<S> {
    pub fn new(target: JointPolicyTable<S>) -> Self {
        Self { target }
    }
}

impl<S: PartialEq + Clone + Send + Sync> TransferRule<S> for ForcingRule<S> {
    fn family_id(&self) -> &str {
        "forcing"
    }

    fn transfers(&self, params: &[f64], state: &S, actions: &[Action]) -> Vec<f64> {
        let fine = params[0];
        let mut out = vec![0.0; actions.len()];
        if let Some(target) = self.target.action(state) {
            for (i, (a, t)) in actions.iter().zip(target).enumerate() {
                if a != t {
                    pay_to_others(&mut out, i, fine);
                }
            }
        }
        out
    }
}

/// Deviation fine `R_max / (1 - gamma)`.
pub fn forcing_fine<G: crate::game::MarkovGame>(game: &G) -> f64 {
    game.reward_bound() / (1.0 - game.discount())
}

/// Build the forcing contract for `optimal`, proposed by agent 0.
///
/// Agent `i >= 1` receives `V_i(rejection) - V_i(optimal)` at signing, so the
/// proposer ends up with `W(optimal) - sum_{i>=1} V_i(rejection)`.
pub fn forcing_contract<G>(
    game: &G,
    optimal: &JointPolicyTable<G::State>,
    rejection_values: &ValueVector,
) -> Result<Contract<G::State>>
where
    G: FiniteMarkovGame,
    G::State: Eq + Hash + 'static,
{
    if !optimal.is_deterministic() {
        return Err(Error::Unsupported("forcing contracts need a deterministic target profile".into()));
    }
    let n = game.num_agents();
    if rejection_values.len() != n {
        return Err(Error::InvalidParameter("rejection values must have one entry per agent".into()));
    }
    for s in game.states() {
        if !game.is_terminal(&s) && optimal.action(&s).is_none() {
            return Err(Error::InvalidParameter(format!("target profile does not cover state {s:?}")));
        }
    }
    let table = optimal.clone();
    let policy = move |s: &G::State| table.action(s).map(<[Action]>::to_vec).unwrap_or_default();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let start = game.initial_state(&mut rng);
    let on_path = exact_values(game, &policy, &start, game.horizon());

    let mut signing = vec![0.0; n];
    for i in 1..n {
        let d = rejection_values.0[i] - on_path[i];
        signing[i] = d;
        signing[0] -= d;
    }
    let rule = Arc::new(ForcingRule::new(optimal.clone()));
    Contract::new(rule, vec![forcing_fine(game)], signing)
}
