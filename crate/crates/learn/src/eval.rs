//! Policy evaluation without learning.

use contracting_core::{rollout, Action, AgentPolicy, MarkovGame, SeedStream};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::policy::Policy;
use crate::rollout::{observation, Control};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_rewards: Vec<f64>,
    pub std_rewards: Vec<f64>,
    pub mean_social: f64,
    pub std_social: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and standard deviation of undiscounted episode totals.
pub fn evaluate_policies<G: MarkovGame>(
    policies: &[&dyn AgentPolicy<G::State>],
    game: &G,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(LearnError::Config("evaluation needs at least one episode".into()));
    }
    let n = game.num_agents();
    let stream = SeedStream::new(seed);
    let mut per_agent = vec![Vec::with_capacity(episodes); n];
    let mut social = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let traj = rollout(game, policies, stream.child(e as u64).seed())?;
        let totals = traj.totals(n);
        social.push(totals.iter().sum());
        for (acc, v) in per_agent.iter_mut().zip(totals) {
            acc.push(v);
        }
    }
    let (mean_social, std_social) = mean_std(&social);
    let (mean_rewards, std_rewards) = per_agent.iter().map(|xs| mean_std(xs)).unzip();
    Ok(EvalReport { episodes, mean_rewards, std_rewards, mean_social, std_social })
}

/// A trained policy acting for one agent of `game`.
pub struct LearnedAgent<'a, G: MarkovGame> {
    pub game: &'a G,
    pub policy: &'a Policy,
    pub agent: usize,
    pub control: Control,
    pub extra: Vec<f64>,
    pub greedy: bool,
}

impl<G: MarkovGame> AgentPolicy<G::State> for LearnedAgent<'_, G> {
    fn act(&self, state: &G::State, rng: &mut ChaCha8Rng) -> Action {
        let learner = match self.control {
            Control::Separate => self.agent,
            Control::Joint => 0,
        };
        let obs = observation(self.game, state, self.control, learner, &self.extra);
        let part = match self.control {
            Control::Separate => 0,
            Control::Joint => self.agent,
        };
        // Parts of a factored head are independent, so sampling them one
        // agent at a time draws from the joint distribution.
        let actions = if self.greedy { self.policy.act_greedy(&obs) } else { self.policy.act(&obs, rng) };
        actions[part].clone()
    }
}
