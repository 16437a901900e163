//! N-agent Markov games, rollouts and return accounting.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Lane, SeedStream};

/// One agent's action space.
///
/// Either a finite label set, a box of continuous values, or both at once
/// (gifting bolts a continuous gift vector onto a discrete game).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    labels: Vec<String>,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionSpace {
    pub fn discrete<I, L>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidParameter("discrete action space needs at least one label".into()));
        }
        Ok(Self { labels, low: Vec::new(), high: Vec::new() })
    }

    pub fn continuous(low: f64, high: f64) -> Result<Self> {
        Self::boxed(vec![low], vec![high])
    }

    pub fn boxed(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let space = Self { labels: Vec::new(), low, high };
        space.check_bounds()?;
        if space.low.is_empty() {
            return Err(Error::InvalidParameter("continuous action space needs a dimension".into()));
        }
        Ok(space)
    }

    /// Append continuous dimensions to this space.
    pub fn with_box(mut self, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        self.low.extend(low);
        self.high.extend(high);
        self.check_bounds()?;
        Ok(self)
    }

    fn check_bounds(&self) -> Result<()> {
        if self.low.len() != self.high.len() {
            return Err(Error::InvalidParameter("bound vectors differ in length".into()));
        }
        for (lo, hi) in self.low.iter().zip(&self.high) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidParameter(format!("bad continuous bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_choices(&self) -> usize {
        self.labels.len()
    }

    pub fn is_discrete(&self) -> bool {
        !self.labels.is_empty()
    }

    pub fn continuous_dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn is_finite(&self) -> bool {
        self.is_discrete() && self.low.is_empty()
    }

    pub fn contains(&self, action: &Action) -> bool {
        let choice_ok = match (self.is_discrete(), action.choice) {
            (true, Some(c)) => c < self.labels.len(),
            (false, None) => true,
            _ => false,
        };
        choice_ok
            && action.values.len() == self.low.len()
            && action
                .values
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, agent: usize, action: &Action) -> Result<()> {
        if self.contains(action) {
            Ok(())
        } else {
            Err(Error::InvalidAction { agent, value: action.to_string() })
        }
    }

    /// Every action of a finite space, in label order.
    pub fn enumerate(&self) -> Result<Vec<Action>> {
        if !self.is_finite() {
            return Err(Error::Unsupported("cannot enumerate a continuous action space".into()));
        }
        Ok((0..self.labels.len()).map(Action::discrete).collect())
    }
}

/// A single agent's action: an optional discrete choice plus continuous values.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub choice: Option<usize>,
    pub values: Vec<f64>,
}

impl Action {
    pub fn discrete(choice: usize) -> Self {
        Self { choice: Some(choice), values: Vec::new() }
    }

    pub fn continuous(values: Vec<f64>) -> Self {
        Self { choice: None, values }
    }

    pub fn scalar(value: f64) -> Self {
        Self::continuous(vec![value])
    }

    pub fn hybrid(choice: usize, values: Vec<f64>) -> Self {
        Self { choice: Some(choice), values }
    }

    /// Discrete choice, or `usize::MAX` when there is none.
    pub fn index(&self) -> usize {
        self.choice.unwrap_or(usize::MAX)
    }

    pub fn value(&self, dim: usize) -> f64 {
        self.values.get(dim).copied().unwrap_or(0.0)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.choice, self.values.is_empty()) {
            (Some(c), true) => write!(f, "#{c}"),
            (None, _) => write!(f, "{:?}", self.values),
            (Some(c), false) => write!(f, "#{c}{:?}", self.values),
        }
    }
}

/// An N-agent Markov game.
///
/// Rewards are a pure function of `(state, joint action)`; all randomness
/// lives in [`MarkovGame::transition`].
pub trait MarkovGame: Send + Sync {
    type State: Clone + fmt::Debug + PartialEq + Send + Sync;

    fn num_agents(&self) -> usize;

    fn action_space(&self, agent: usize) -> &ActionSpace;

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State;

    fn transition(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> Self::State;

    fn reward(&self, state: &Self::State, actions: &[Action]) -> Vec<f64>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    fn discount(&self) -> f64;

    /// Episode cap, counted in clock steps.
    fn horizon(&self) -> usize;

    /// `R_max` with `|R_i(s, a)| <= R_max`.
    fn reward_bound(&self) -> f64;

    /// Per-agent observation features.
    fn observe(&self, state: &Self::State, agent: usize) -> Vec<f64>;

    fn observation_dim(&self) -> usize;

    /// Action validity may depend on the state (e.g. negotiation phases).
    fn check_action(&self, _state: &Self::State, agent: usize, action: &Action) -> Result<()> {
        self.action_space(agent).check(agent, action)
    }

    /// Whether a step taken from `state` advances the discount clock.
    fn advances_clock(&self, _state: &Self::State) -> bool {
        true
    }

    /// Single simultaneous-move games (they get a separate gifting step).
    fn is_one_shot(&self) -> bool {
        false
    }

    /// Reward and next state together; games that share work override this.
    fn step(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> (Self::State, Vec<f64>) {
        let rewards = self.reward(state, actions);
        (self.transition(state, actions, rng), rewards)
    }
}

/// A game with enumerable states and actions whose transitions expose their support.
pub trait FiniteMarkovGame: MarkovGame
where
    Self::State: Eq + Hash,
{
    fn states(&self) -> Vec<Self::State>;

    fn transition_support(&self, state: &Self::State, actions: &[Action]) -> Vec<(Self::State, f64)>;

    fn joint_actions(&self) -> Result<Vec<Vec<Action>>> {
        let per_agent = (0..self.num_agents())
            .map(|i| self.action_space(i).enumerate())
            .collect::<Result<Vec<_>>>()?;
        Ok(cartesian(&per_agent))
    }
}

/// Cartesian product, first agent varying slowest.
pub fn cartesian<T: Clone>(sets: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for set in sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for item in set {
                let mut p = prefix.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Anything that picks an action for one agent.
pub trait AgentPolicy<S> {
    fn act(&self, state: &S, rng: &mut ChaCha8Rng) -> Action;
}

impl<S, F> AgentPolicy<S> for F
where
    F: Fn(&S, &mut ChaCha8Rng) -> Action,
{
    fn act(&self, state: &S, rng: &mut ChaCha8Rng) -> Action {
        self(state, rng)
    }
}

/// Policy that always plays the same action.
pub fn fixed_action<S>(action: Action) -> impl Fn(&S, &mut ChaCha8Rng) -> Action {
    move |_, _| action.clone()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step<S> {
    pub state: S,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub clock: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub steps: Vec<Step<S>>,
    pub final_state: S,
    pub terminal: bool,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn clock_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.clock).count()
    }

    /// Undiscounted per-agent totals.
    pub fn totals(&self, num_agents: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_agents];
        for step in &self.steps {
            for (o, r) in out.iter_mut().zip(&step.rewards) {
                *o += r;
            }
        }
        out
    }
}

/// Per-agent discounted returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Run one episode. Deterministic given `seed`.
pub fn rollout<G: MarkovGame>(
    game: &G,
    policies: &[&dyn AgentPolicy<G::State>],
    seed: u64,
) -> Result<Trajectory<G::State>> {
    let n = game.num_agents();
    if policies.len() != n {
        return Err(Error::InvalidParameter(format!("{} policies for {n} agents", policies.len())));
    }
    let stream = SeedStream::new(seed);
    let mut state = game.initial_state(&mut stream.rng(0, Lane::Init));
    let horizon = game.horizon();
    // Negotiation steps do not count toward the horizon; bound them anyway.
    let max_free_steps = 2 * (horizon + 1);
    let mut steps = Vec::new();
    let (mut clock, mut free) = (0usize, 0usize);
    let mut index = 0u64;
    while clock < horizon && !game.is_terminal(&state) {
        let ticks = game.advances_clock(&state);
        if !ticks {
            if free == max_free_steps {
                break;
            }
            free += 1;
        }
        let mut actions = Vec::with_capacity(n);
        for (agent, policy) in policies.iter().enumerate() {
            let action = policy.act(&state, &mut stream.rng(index, Lane::Agent(agent)));
            game.check_action(&state, agent, &action)?;
            actions.push(action);
        }
        let (next, rewards) = game.step(&state, &actions, &mut stream.rng(index, Lane::Environment));
        debug_assert_eq!(rewards.len(), n);
        steps.push(Step { state, actions, rewards, clock: ticks });
        state = next;
        if ticks {
            clock += 1;
        }
        index += 1;
    }
    let terminal = game.is_terminal(&state);
    Ok(Trajectory { steps, final_state: state, terminal })
}

/// `V_i = sum_t gamma^t r_{t,i}`, where `t` counts clock steps only.
pub fn discounted_returns<S>(trajectory: &Trajectory<S>, discount: f64) -> ValueVector {
    let n = trajectory.steps.first().map_or(0, |s| s.rewards.len());
    let mut values = vec![0.0; n];
    let mut weight = 1.0;
    for step in &trajectory.steps {
        for (v, r) in values.iter_mut().zip(&step.rewards) {
            *v += weight * r;
        }
        if step.clock {
            weight *= discount;
        }
    }
    ValueVector(values)
}

pub fn welfare(values: &ValueVector) -> f64 {
    values.0.iter().sum()
}

/// Deterministic joint policy over the states of a finite game.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPolicyTable<S> {
    entries: Vec<(S, Vec<(Vec<Action>, f64)>)>,
}

impl<S: PartialEq + Clone> JointPolicyTable<S> {
    pub fn new(entries: Vec<(S, Vec<(Vec<Action>, f64)>)>) -> Self {
        Self { entries }
    }

    pub fn deterministic(entries: Vec<(S, Vec<Action>)>) -> Self {
        Self { entries: entries.into_iter().map(|(s, a)| (s, vec![(a, 1.0)])).collect() }
    }

    pub fn is_deterministic(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, dist)| dist.len() == 1 && (dist[0].1 - 1.0).abs() < 1e-12)
    }

    /// The deterministic action at `state`, if the table covers it.
    pub fn action(&self, state: &S) -> Option<&[Action]> {
        self.entries
            .iter()
            .find(|(s, _)| s == state)
            .and_then(|(_, dist)| (dist.len() == 1).then(|| dist[0].0.as_slice()))
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.entries.iter().map(|(s, _)| s)
    }
}

/// Exact expected discounted returns of a deterministic joint policy on a
/// finite game, from `state` for at most `steps` clock steps.
pub fn exact_values<G>(
    game: &G,
    policy: &dyn Fn(&G::State) -> Vec<Action>,
    state: &G::State,
    steps: usize,
) -> Vec<f64>
where
    G: FiniteMarkovGame,
    G::State: Eq + Hash,
{
    let n = game.num_agents();
    if steps == 0 || game.is_terminal(state) {
        return vec![0.0; n];
    }
    let actions = policy(state);
    let mut values = game.reward(state, &actions);
    let gamma = game.discount();
    for (next, p) in game.transition_support(state, &actions) {
        let cont = exact_values(game, policy, &next, steps - 1);
        for (v, c) in values.iter_mut().zip(cont) {
            *v += gamma * p * c;
        }
    }
    values
}

/// True iff every single-agent deviation from `target` is revealed by the
/// support of the next state.
pub fn has_detectable_deviators<G>(game: &G, target: &dyn Fn(&G::State) -> Vec<Action>) -> Result<bool>
where
    G: FiniteMarkovGame,
    G::State: Eq + Hash,
{
    let n = game.num_agents();
    let per_agent = (0..n).map(|i| game.action_space(i).enumerate()).collect::<Result<Vec<_>>>()?;
    for state in game.states() {
        if game.is_terminal(&state) {
            continue;
        }
        let on_path = target(&state);
        let mut seen: HashSet<G::State> = game
            .transition_support(&state, &on_path)
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, _)| s)
            .collect();
        for (agent, options) in per_agent.iter().enumerate() {
            // Supports of one agent's alternative deviations may overlap each
            // other; they must only avoid the path and other agents' deviations.
            let mut own: HashSet<G::State> = HashSet::new();
            for alt in options.iter().filter(|a| **a != on_path[agent]) {
                let mut joint = on_path.clone();
                joint[agent] = alt.clone();
                for (next, p) in game.transition_support(&state, &joint) {
                    if p <= 0.0 {
                        continue;
                    }
                    if seen.contains(&next) {
                        return Ok(false);
                    }
                    own.insert(next);
                }
            }
            seen.extend(own);
        }
    }
    Ok(true)
}
