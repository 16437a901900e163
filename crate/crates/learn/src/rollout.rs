//! Experience collection for one or more PPO learners.

use contracting_core::{Action, Lane, MarkovGame, SeedStream};
use rand_chacha::ChaCha8Rng;

use crate::ppo::{Batch, Learner};

/// How learners map onto the agents of a game.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    /// Learner `i` drives agent `i` on its own reward.
    Separate,
    /// One learner drives every agent on the summed reward.
    Joint,
}

pub fn observation<G: MarkovGame>(game: &G, state: &G::State, control: Control, learner: usize, extra: &[f64]) -> Vec<f64> {
    let mut obs = match control {
        Control::Separate => game.observe(state, learner),
        Control::Joint => (0..game.num_agents()).flat_map(|i| game.observe(state, i)).collect(),
    };
    obs.extend_from_slice(extra);
    obs
}

pub fn observation_dim<G: MarkovGame>(game: &G, control: Control, extra: usize) -> usize {
    match control {
        Control::Separate => game.observation_dim() + extra,
        Control::Joint => game.num_agents() * game.observation_dim() + extra,
    }
}

/// Experience drawn for one training iteration.
#[derive(Clone, Debug, Default)]
pub struct Collected {
    pub batches: Vec<Batch>,
    /// Undiscounted per-agent totals of episodes that ran to the end.
    pub finished: Vec<Vec<f64>>,
    /// Totals of an episode cut short by the step budget.
    pub partial: Option<Vec<f64>>,
    pub steps: usize,
}

impl Collected {
    /// Per-agent mean over finished episodes, falling back to the partial one.
    pub fn mean_totals(&self, n: usize) -> Option<Vec<f64>> {
        let episodes: Vec<&Vec<f64>> =
            if self.finished.is_empty() { self.partial.iter().collect() } else { self.finished.iter().collect() };
        if episodes.is_empty() {
            return None;
        }
        let k = episodes.len() as f64;
        Some((0..n).map(|i| episodes.iter().map(|e| e[i]).sum::<f64>() / k).collect())
    }
}

/// Per-episode hook: may modify the game and returns extra observation
/// features for the episode.
pub type Prepare<'a, G> = dyn FnMut(&mut G, &mut ChaCha8Rng) -> Vec<f64> + 'a;

pub struct Collector<'a, G: MarkovGame> {
    pub control: Control,
    pub gamma: f64,
    pub stream: SeedStream,
    pub next_episode: u64,
    pub prepare: Box<Prepare<'a, G>>,
}

impl<'a, G: MarkovGame> Collector<'a, G> {
    pub fn new(control: Control, gamma: f64, stream: SeedStream) -> Self {
        Self { control, gamma, stream, next_episode: 0, prepare: Box::new(|_, _| Vec::new()) }
    }

    pub fn with_prepare(mut self, prepare: Box<Prepare<'a, G>>) -> Self {
        self.prepare = prepare;
        self
    }

    /// Draw exactly `steps` environment steps, finishing episodes where the
    /// budget allows and bootstrapping the last one otherwise.
    pub fn collect(&mut self, game: &mut G, learners: &[Learner], steps: usize) -> Collected {
        let n = game.num_agents();
        let mut out = Collected { batches: vec![Batch::default(); learners.len()], ..Collected::default() };
        while out.steps < steps {
            let episode = self.stream.child(self.next_episode);
            self.next_episode += 1;
            let extra = (self.prepare)(game, &mut episode.rng(0, Lane::Aux(7)));
            let mut state = game.initial_state(&mut episode.rng(0, Lane::Init));
            let mut trace: Vec<Vec<(Vec<f64>, crate::policy::Sample, f64)>> = vec![Vec::new(); learners.len()];
            let mut totals = vec![0.0; n];
            let mut t = 0usize;
            let horizon = game.horizon();
            while t < horizon && !game.is_terminal(&state) && out.steps < steps {
                let mut actions: Vec<Action> = Vec::with_capacity(n);
                let mut drawn = Vec::with_capacity(learners.len());
                for (l, learner) in learners.iter().enumerate() {
                    let obs = observation(game, &state, self.control, l, &extra);
                    let sample = learner.act(&obs, &mut episode.rng(t as u64, Lane::Agent(l)));
                    actions.extend(learner.policy.head.to_actions(&sample.choices, &sample.raw));
                    drawn.push((obs, sample));
                }
                let (next, rewards) = game.step(&state, &actions, &mut episode.rng(t as u64, Lane::Environment));
                for (tot, r) in totals.iter_mut().zip(&rewards) {
                    *tot += r;
                }
                for (l, (obs, sample)) in drawn.into_iter().enumerate() {
                    let r = match self.control {
                        Control::Separate => rewards[l],
                        Control::Joint => rewards.iter().sum(),
                    };
                    trace[l].push((obs, sample, r));
                }
                state = next;
                t += 1;
                out.steps += 1;
            }
            let done = t >= horizon || game.is_terminal(&state);
            for (l, steps) in trace.into_iter().enumerate() {
                let mut ret = if done {
                    0.0
                } else {
                    learners[l].value_of(&observation(game, &state, self.control, l, &extra))
                };
                let mut rets = vec![0.0; steps.len()];
                for (k, (_, _, r)) in steps.iter().enumerate().rev() {
                    ret = r + self.gamma * ret;
                    rets[k] = ret;
                }
                for ((obs, sample, _), r) in steps.into_iter().zip(rets) {
                    out.batches[l].push(obs, sample, r);
                }
            }
            if done {
                out.finished.push(totals);
            } else {
                out.partial = Some(totals);
            }
        }
        out
    }
}
