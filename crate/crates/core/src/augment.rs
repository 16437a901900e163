//! Game augmentations: contracting (single proposer and general initiation
//! dynamics), a fixed contract in force, and gifting.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::contract::{Contract, ContractSpace};
use crate::error::{Error, Result};
use crate::game::{Action, ActionSpace, MarkovGame};

/// What happens to the contract after a play step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Initiation {
    /// Freeze the game and let this agent propose.
    Propose(usize),
    /// Keep the active contract (or lack of one).
    Continue,
    /// Drop the active contract; no new proposal.
    Void,
}

/// When contracting phases start and who proposes.
pub trait InitiationDynamics<S>: Send + Sync {
    /// Distribution over the initial proposer; `None` means no negotiation.
    fn at_init(&self) -> Vec<(Option<usize>, f64)>;

    /// Distribution over what happens after `actions` were played at `state`.
    fn at_step(&self, contract: Option<&Contract<S>>, state: &S, actions: &[Action]) -> Vec<(Initiation, f64)>;
}

/// One proposal at the start of the episode; the outcome holds forever.
#[derive(Clone, Copy, Debug)]
pub struct ProposeAtStart {
    pub proposer: usize,
}

impl<S> InitiationDynamics<S> for ProposeAtStart {
    fn at_init(&self) -> Vec<(Option<usize>, f64)> {
        vec![(Some(self.proposer), 1.0)]
    }

    fn at_step(&self, _: Option<&Contract<S>>, _: &S, _: &[Action]) -> Vec<(Initiation, f64)> {
        vec![(Initiation::Continue, 1.0)]
    }
}

/// Proposal at the start; any active contract is voided with probability `p` per step.
#[derive(Clone, Copy, Debug)]
pub struct VoidWithProbability {
    pub proposer: usize,
    pub p: f64,
}

impl<S> InitiationDynamics<S> for VoidWithProbability {
    fn at_init(&self) -> Vec<(Option<usize>, f64)> {
        vec![(Some(self.proposer), 1.0)]
    }

    fn at_step(&self, contract: Option<&Contract<S>>, _: &S, _: &[Action]) -> Vec<(Initiation, f64)> {
        match contract {
            Some(_) => vec![(Initiation::Void, self.p), (Initiation::Continue, 1.0 - self.p)],
            None => vec![(Initiation::Continue, 1.0)],
        }
    }
}

/// The same agent gets to propose before every base step.
#[derive(Clone, Copy, Debug)]
pub struct ReproposeEveryStep {
    pub proposer: usize,
}

impl<S> InitiationDynamics<S> for ReproposeEveryStep {
    fn at_init(&self) -> Vec<(Option<usize>, f64)> {
        vec![(Some(self.proposer), 1.0)]
    }

    fn at_step(&self, _: Option<&Contract<S>>, _: &S, _: &[Action]) -> Vec<(Initiation, f64)> {
        vec![(Initiation::Propose(self.proposer), 1.0)]
    }
}

fn sample<T: Copy>(dist: &[(T, f64)], rng: &mut ChaCha8Rng) -> T {
    let total: f64 = dist.iter().map(|(_, p)| *p).sum();
    assert!(
        total > 0.0 && dist.iter().all(|(_, p)| *p >= 0.0) && (total - 1.0).abs() < 1e-6,
        "initiation distribution is not normalized"
    );
    if dist.len() == 1 {
        return dist[0].0;
    }
    let mut u = rng.random::<f64>() * total;
    for (x, p) in dist {
        if u < *p {
            return *x;
        }
        u -= p;
    }
    dist[dist.len() - 1].0
}

/// How many non-proposers must accept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AcceptanceRule {
    #[default]
    Unanimous,
    Quota(usize),
}

impl AcceptanceRule {
    pub fn accepts(&self, votes: &[bool], proposer: usize) -> bool {
        let yes = votes.iter().enumerate().filter(|(i, v)| *i != proposer && **v).count();
        let needed = match self {
            AcceptanceRule::Unanimous => votes.len().saturating_sub(1),
            AcceptanceRule::Quota(k) => *k,
        };
        yes >= needed
    }
}

/// State of the contract-augmented game.
#[derive(Clone, Debug, PartialEq)]
pub enum AugmentedState<S> {
    Propose { base: S, proposer: usize },
    AwaitAcceptance { base: S, proposer: usize, pending: Contract<S> },
    Play { base: S, contract: Option<Contract<S>> },
}

impl<S> AugmentedState<S> {
    pub fn base(&self) -> &S {
        match self {
            AugmentedState::Propose { base, .. }
            | AugmentedState::AwaitAcceptance { base, .. }
            | AugmentedState::Play { base, .. } => base,
        }
    }

    pub fn active_contract(&self) -> Option<&Contract<S>> {
        match self {
            AugmentedState::Play { contract, .. } => contract.as_ref(),
            _ => None,
        }
    }

    pub fn phase_index(&self) -> usize {
        match self {
            AugmentedState::Propose { .. } => 0,
            AugmentedState::AwaitAcceptance { .. } => 1,
            AugmentedState::Play { .. } => 2,
        }
    }
}

/// Encoded accept/reject vote.
pub fn vote(accept: bool) -> Action {
    Action::discrete(usize::from(accept))
}

/// Encoded proposal.
pub fn proposal(params: Vec<f64>) -> Action {
    Action::continuous(params)
}

enum Mode<S> {
    SingleProposer,
    General(Arc<dyn InitiationDynamics<S>>),
}

/// The contract-augmented game around a base game.
pub struct AugmentedGame<G: MarkovGame> {
    base: G,
    space: ContractSpace<G::State>,
    mode: Mode<G::State>,
    rule: AcceptanceRule,
}

/// Agent `space.proposer()` proposes once at the start; everybody else votes.
pub fn augment_single_proposer<G: MarkovGame>(base: G, space: ContractSpace<G::State>) -> AugmentedGame<G> {
    AugmentedGame { base, space, mode: Mode::SingleProposer, rule: AcceptanceRule::Unanimous }
}

/// Contracting phases driven by arbitrary initiation dynamics.
pub fn augment_general<G: MarkovGame>(
    base: G,
    space: ContractSpace<G::State>,
    dynamics: Arc<dyn InitiationDynamics<G::State>>,
) -> Result<AugmentedGame<G>> {
    let n = base.num_agents();
    let init = dynamics.at_init();
    let total: f64 = init.iter().map(|(_, p)| *p).sum();
    if (total - 1.0).abs() > 1e-6 || init.iter().any(|(who, p)| *p < 0.0 || who.is_some_and(|i| i >= n)) {
        return Err(Error::InvalidParameter("malformed initiation distribution".into()));
    }
    Ok(AugmentedGame { base, space, mode: Mode::General(dynamics), rule: AcceptanceRule::Unanimous })
}

impl<G: MarkovGame> AugmentedGame<G> {
    pub fn with_acceptance_rule(mut self, rule: AcceptanceRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn base(&self) -> &G {
        &self.base
    }

    pub fn space(&self) -> &ContractSpace<G::State> {
        &self.space
    }

    pub fn acceptance_rule(&self) -> AcceptanceRule {
        self.rule
    }

    fn accepted(&self, proposer: usize, actions: &[Action]) -> bool {
        let votes: Vec<bool> = actions.iter().map(|a| a.choice == Some(1)).collect();
        self.rule.accepts(&votes, proposer)
    }
}

impl<G: MarkovGame> MarkovGame for AugmentedGame<G> {
    type State = AugmentedState<G::State>;

    fn num_agents(&self) -> usize {
        self.base.num_agents()
    }

    fn action_space(&self, agent: usize) -> &ActionSpace {
        self.base.action_space(agent)
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State {
        let base = self.base.initial_state(rng);
        match &self.mode {
            Mode::SingleProposer => AugmentedState::Propose { base, proposer: self.space.proposer() },
            Mode::General(dynamics) => match sample(&dynamics.at_init(), rng) {
                Some(proposer) => AugmentedState::Propose { base, proposer },
                None => AugmentedState::Play { base, contract: None },
            },
        }
    }

    fn transition(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> Self::State {
        match state {
            AugmentedState::Propose { base, proposer } => {
                let pending = self
                    .space
                    .contract(&actions[*proposer].values)
                    .expect("proposal validated by check_action");
                AugmentedState::AwaitAcceptance { base: base.clone(), proposer: *proposer, pending }
            }
            AugmentedState::AwaitAcceptance { base, proposer, pending } => {
                let contract = self.accepted(*proposer, actions).then(|| pending.clone());
                AugmentedState::Play { base: base.clone(), contract }
            }
            AugmentedState::Play { base, contract } => {
                // Base draws come first so the dynamics never perturb them.
                let next = self.base.transition(base, actions, rng);
                match &self.mode {
                    Mode::SingleProposer => AugmentedState::Play { base: next, contract: contract.clone() },
                    Mode::General(dynamics) => {
                        if self.base.is_terminal(&next) {
                            return AugmentedState::Play { base: next, contract: contract.clone() };
                        }
                        match sample(&dynamics.at_step(contract.as_ref(), base, actions), rng) {
                            Initiation::Continue => AugmentedState::Play { base: next, contract: contract.clone() },
                            Initiation::Void => AugmentedState::Play { base: next, contract: None },
                            Initiation::Propose(proposer) => AugmentedState::Propose { base: next, proposer },
                        }
                    }
                }
            }
        }
    }

    fn reward(&self, state: &Self::State, actions: &[Action]) -> Vec<f64> {
        let n = self.num_agents();
        match state {
            AugmentedState::Propose { .. } => vec![0.0; n],
            AugmentedState::AwaitAcceptance { proposer, pending, .. } => {
                if self.accepted(*proposer, actions) {
                    pending.signing_delta().to_vec()
                } else {
                    vec![0.0; n]
                }
            }
            AugmentedState::Play { base, contract } => {
                let mut r = self.base.reward(base, actions);
                if let Some(c) = contract {
                    for (ri, d) in r.iter_mut().zip(c.transfer_delta(base, actions)) {
                        *ri += d;
                    }
                }
                r
            }
        }
    }

    fn is_terminal(&self, state: &Self::State) -> bool {
        matches!(state, AugmentedState::Play { base, .. } if self.base.is_terminal(base))
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn reward_bound(&self) -> f64 {
        self.base.reward_bound()
    }

    fn observe(&self, state: &Self::State, agent: usize) -> Vec<f64> {
        let mut obs = self.base.observe(state.base(), agent);
        let dim = self.space.dim();
        let params: Vec<f64> = match state {
            AugmentedState::AwaitAcceptance { pending, .. } => pending.params().to_vec(),
            AugmentedState::Play { contract: Some(c), .. } => c.params().to_vec(),
            _ => Vec::new(),
        };
        obs.extend((0..dim).map(|k| params.get(k).copied().unwrap_or(0.0)));
        let mut phase = [0.0; 3];
        phase[state.phase_index()] = 1.0;
        obs.extend(phase);
        obs
    }

    fn observation_dim(&self) -> usize {
        self.base.observation_dim() + self.space.dim() + 3
    }

    fn check_action(&self, state: &Self::State, agent: usize, action: &Action) -> Result<()> {
        match state {
            AugmentedState::Propose { proposer, .. } if *proposer == agent => {
                if self.space.contains_params(&action.values) {
                    Ok(())
                } else {
                    Err(Error::InvalidAction { agent, value: action.to_string() })
                }
            }
            AugmentedState::Propose { .. } => Ok(()),
            AugmentedState::AwaitAcceptance { proposer, .. } => {
                if agent == *proposer || matches!(action.choice, Some(0) | Some(1)) {
                    Ok(())
                } else {
                    Err(Error::InvalidAction { agent, value: action.to_string() })
                }
            }
            AugmentedState::Play { base, .. } => self.base.check_action(base, agent, action),
        }
    }

    fn advances_clock(&self, state: &Self::State) -> bool {
        matches!(state, AugmentedState::Play { .. })
    }
}

/// The base game with one contract permanently in force.
///
/// Observations carry the contract parameters, padded to `param_dim`.
pub struct ContractedGame<G: MarkovGame> {
    base: G,
    contract: Contract<G::State>,
    param_dim: usize,
}

impl<G: MarkovGame> ContractedGame<G> {
    pub fn new(base: G, contract: Contract<G::State>, param_dim: usize) -> Self {
        Self { base, contract, param_dim }
    }

    pub fn contract(&self) -> &Contract<G::State> {
        &self.contract
    }

    pub fn set_contract(&mut self, contract: Contract<G::State>) {
        self.contract = contract;
    }

    pub fn base(&self) -> &G {
        &self.base
    }
}

impl<G: MarkovGame> MarkovGame for ContractedGame<G> {
    type State = G::State;

    fn num_agents(&self) -> usize {
        self.base.num_agents()
    }

    fn action_space(&self, agent: usize) -> &ActionSpace {
        self.base.action_space(agent)
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State {
        self.base.initial_state(rng)
    }

    fn transition(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> Self::State {
        self.base.transition(state, actions, rng)
    }

    fn reward(&self, state: &Self::State, actions: &[Action]) -> Vec<f64> {
        let mut r = self.base.reward(state, actions);
        for (ri, d) in r.iter_mut().zip(self.contract.transfer_delta(state, actions)) {
            *ri += d;
        }
        r
    }

    fn step(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> (Self::State, Vec<f64>) {
        let delta = self.contract.transfer_delta(state, actions);
        let (next, mut r) = self.base.step(state, actions, rng);
        for (ri, d) in r.iter_mut().zip(delta) {
            *ri += d;
        }
        (next, r)
    }

    fn is_terminal(&self, state: &Self::State) -> bool {
        self.base.is_terminal(state)
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn reward_bound(&self) -> f64 {
        self.base.reward_bound()
    }

    fn observe(&self, state: &Self::State, agent: usize) -> Vec<f64> {
        let mut obs = self.base.observe(state, agent);
        let params = self.contract.params();
        obs.extend((0..self.param_dim).map(|k| params.get(k).copied().unwrap_or(0.0)));
        obs
    }

    fn observation_dim(&self) -> usize {
        self.base.observation_dim() + self.param_dim
    }

    fn check_action(&self, state: &Self::State, agent: usize, action: &Action) -> Result<()> {
        self.base.check_action(state, agent, action)
    }

    fn is_one_shot(&self) -> bool {
        self.base.is_one_shot()
    }
}

impl<G> crate::game::FiniteMarkovGame for ContractedGame<G>
where
    G: crate::game::FiniteMarkovGame,
    G::State: Eq + std::hash::Hash,
{
    fn states(&self) -> Vec<Self::State> {
        self.base.states()
    }

    fn transition_support(&self, state: &Self::State, actions: &[Action]) -> Vec<(Self::State, f64)> {
        self.base.transition_support(state, actions)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GiftTiming {
    /// Degenerate bound: the game is passed through unchanged.
    Off,
    /// One extra gifting step after a one-shot game.
    PostPlay,
    /// Gifts ride along with every base action.
    EveryStep,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GiftState<S> {
    Play(S),
    Gift(S),
    Done(S),
}

impl<S> GiftState<S> {
    pub fn base(&self) -> &S {
        match self {
            GiftState::Play(s) | GiftState::Gift(s) | GiftState::Done(s) => s,
        }
    }
}

/// Base game whose agents may hand reward to each other.
///
/// Agent `i`'s continuous action values are gifts to the other agents in
/// index order, each within `[0, max_gift]`.
#[derive(Clone)]
pub struct GiftingGame<G: MarkovGame> {
    base: G,
    max_gift: f64,
    timing: GiftTiming,
    spaces: Vec<ActionSpace>,
}

pub fn gifting_augment<G: MarkovGame>(base: G, max_gift: f64) -> Result<GiftingGame<G>> {
    if !(max_gift >= 0.0 && max_gift.is_finite()) {
        return Err(Error::InvalidParameter(format!("max_gift must be >= 0, got {max_gift}")));
    }
    let n = base.num_agents();
    let timing = if max_gift == 0.0 {
        GiftTiming::Off
    } else if base.is_one_shot() {
        GiftTiming::PostPlay
    } else {
        GiftTiming::EveryStep
    };
    let spaces = (0..n)
        .map(|i| {
            let space = base.action_space(i).clone();
            if timing == GiftTiming::Off {
                Ok(space)
            } else {
                space.with_box(vec![0.0; n - 1], vec![max_gift; n - 1])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GiftingGame { base, max_gift, timing, spaces })
}

impl<G: MarkovGame> GiftingGame<G> {
    pub fn timing(&self) -> GiftTiming {
        self.timing
    }

    pub fn max_gift(&self) -> f64 {
        self.max_gift
    }

    pub fn base(&self) -> &G {
        &self.base
    }

    fn base_action(&self, agent: usize, action: &Action) -> Action {
        let dim = self.base.action_space(agent).continuous_dim();
        Action { choice: action.choice, values: action.values[..dim].to_vec() }
    }

    fn add_gifts(&self, rewards: &mut [f64], actions: &[Action]) {
        let n = rewards.len();
        for (giver, action) in actions.iter().enumerate() {
            let offset = self.base.action_space(giver).continuous_dim();
            let gifts = &action.values[offset..];
            let recipients = (0..n).filter(|&j| j != giver);
            for (recipient, g) in recipients.zip(gifts) {
                rewards[giver] -= g;
                rewards[recipient] += g;
            }
        }
    }

    fn base_actions(&self, actions: &[Action]) -> Vec<Action> {
        actions.iter().enumerate().map(|(i, a)| self.base_action(i, a)).collect()
    }
}

impl<G: MarkovGame> MarkovGame for GiftingGame<G> {
    type State = GiftState<G::State>;

    fn num_agents(&self) -> usize {
        self.base.num_agents()
    }

    fn action_space(&self, agent: usize) -> &ActionSpace {
        &self.spaces[agent]
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State {
        GiftState::Play(self.base.initial_state(rng))
    }

    fn transition(&self, state: &Self::State, actions: &[Action], rng: &mut ChaCha8Rng) -> Self::State {
        match state {
            GiftState::Play(s) => {
                let next = self.base.transition(s, &self.base_actions(actions), rng);
                if self.timing == GiftTiming::PostPlay && self.base.is_terminal(&next) {
                    GiftState::Gift(next)
                } else {
                    GiftState::Play(next)
                }
            }
            GiftState::Gift(s) | GiftState::Done(s) => GiftState::Done(s.clone()),
        }
    }

    fn reward(&self, state: &Self::State, actions: &[Action]) -> Vec<f64> {
        match state {
            GiftState::Play(s) => {
                let mut r = self.base.reward(s, &self.base_actions(actions));
                if self.timing == GiftTiming::EveryStep {
                    self.add_gifts(&mut r, actions);
                }
                r
            }
            GiftState::Gift(_) => {
                let mut r = vec![0.0; self.num_agents()];
                self.add_gifts(&mut r, actions);
                r
            }
            GiftState::Done(_) => vec![0.0; self.num_agents()],
        }
    }

    fn is_terminal(&self, state: &Self::State) -> bool {
        match state {
            GiftState::Play(s) => self.base.is_terminal(s),
            GiftState::Gift(_) => false,
            GiftState::Done(_) => true,
        }
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn horizon(&self) -> usize {
        match self.timing {
            GiftTiming::PostPlay => self.base.horizon().max(2),
            _ => self.base.horizon(),
        }
    }

    fn reward_bound(&self) -> f64 {
        let n = self.num_agents() as f64;
        self.base.reward_bound() + self.max_gift * (n - 1.0)
    }

    fn observe(&self, state: &Self::State, agent: usize) -> Vec<f64> {
        let mut obs = self.base.observe(state.base(), agent);
        if self.timing == GiftTiming::PostPlay {
            obs.push(f64::from(u8::from(matches!(state, GiftState::Gift(_)))));
        }
        obs
    }

    fn observation_dim(&self) -> usize {
        self.base.observation_dim() + usize::from(self.timing == GiftTiming::PostPlay)
    }

    fn is_one_shot(&self) -> bool {
        false
    }
}
