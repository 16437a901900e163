//! The four training protocols.

use std::fmt;
use std::str::FromStr;

use contracting_core::augment::{proposal, vote};
use contracting_core::{
    augment_single_proposer, gifting_augment, Action, AgentPolicy, AugmentedState, Contract, ContractSpace,
    ContractedGame, Lane, MarkovGame, SeedStream,
};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::eval::{evaluate_policies, EvalReport, LearnedAgent};
use crate::policy::{ActionPart, Head, Policy};
use crate::ppo::{Hyperparams, Learner};
use crate::rollout::{observation, observation_dim, Collector, Control};

/// Episodes used for the final evaluation of a report.
pub const EVAL_EPISODES: usize = 20;
/// Largest joint action space the joint learner accepts.
pub const MAX_JOINT_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Separate,
    Joint,
    Gifting,
    Contracting,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Separate, Algorithm::Joint, Algorithm::Gifting, Algorithm::Contracting];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Separate => "separate",
            Algorithm::Joint => "joint",
            Algorithm::Gifting => "gifting",
            Algorithm::Contracting => "contracting",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| LearnError::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// 1 or 2 for the contracting stages, 0 otherwise.
    pub stage: u8,
    /// Cumulative environment steps after this iteration.
    pub env_steps: u64,
    pub social_reward: f64,
    pub agent_rewards: Vec<f64>,
    /// Mean proposed parameters (second contracting stage).
    pub contract_params: Option<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
}

/// Trained policies of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Snapshot {
    Separate(Vec<Policy>),
    Joint(Policy),
    Contracting { play: Vec<Policy>, proposer: Policy, acceptors: Vec<Option<Policy>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub env: String,
    pub algorithm: Algorithm,
    pub num_agents: usize,
    pub seed: u64,
    pub env_steps: u64,
    pub iterations: Vec<IterationStats>,
    pub final_eval: EvalReport,
    pub snapshot: Snapshot,
    /// Proposals drawn in the last negotiation iteration.
    pub proposals: Vec<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
    /// Updates skipped because of a non-finite loss.
    pub skipped_updates: usize,
}

impl TrainReport {
    pub fn with_env(mut self, env: impl Into<String>) -> Self {
        self.env = env.into();
        self
    }

    pub fn final_social_reward(&self) -> f64 {
        self.final_eval.mean_social
    }
}

fn single_heads<G: MarkovGame>(game: &G) -> Vec<Head> {
    (0..game.num_agents()).map(|i| Head::single(game.action_space(i))).collect()
}

fn new_learners<G: MarkovGame>(game: &G, extra: usize, hp: &Hyperparams, stream: SeedStream) -> Vec<Learner> {
    let mut rng = stream.rng(0, Lane::Aux(1));
    let dim = observation_dim(game, Control::Separate, extra);
    single_heads(game).into_iter().map(|h| Learner::new(dim, &hp.hidden, h, hp, &mut rng)).collect()
}

/// Shared PPO loop: collect, update every learner, log.
fn ppo_loop<G: MarkovGame>(
    game: &mut G,
    learners: &mut [Learner],
    collector: &mut Collector<'_, G>,
    hp: &Hyperparams,
    budget: u64,
    stage: u8,
    iterations: &mut Vec<IterationStats>,
    env_steps: &mut u64,
) -> usize {
    let n = game.num_agents();
    let mut drawn = 0u64;
    let mut skipped = 0;
    while drawn < budget {
        let steps = (hp.batch_size as u64).min(budget - drawn) as usize;
        let got = collector.collect(game, learners, steps);
        drawn += got.steps as u64;
        *env_steps += got.steps as u64;
        let iteration = iterations.len();
        let mut rng = collector.stream.rng(iteration as u64, Lane::Aux(2));
        for (learner, batch) in learners.iter_mut().zip(&got.batches) {
            if learner.update(batch, hp, hp.minibatch_size, &mut rng).is_err() {
                skipped += 1;
            }
        }
        let agent_rewards = got.mean_totals(n).unwrap_or_else(|| vec![0.0; n]);
        iterations.push(IterationStats {
            iteration,
            stage,
            env_steps: *env_steps,
            social_reward: agent_rewards.iter().sum(),
            agent_rewards,
            contract_params: None,
            acceptance_rate: None,
        });
    }
    skipped
}

fn eval_seed(seed: u64) -> u64 {
    SeedStream::new(seed).child(u64::MAX).seed()
}

/// Independent learners, each maximizing its own return.
pub fn train_separate<G: MarkovGame>(game: &G, hp: &Hyperparams, budget: u64, seed: u64) -> Result<TrainReport>
where
    G: Clone,
{
    hp.validate()?;
    let stream = SeedStream::new(seed);
    let mut game = game.clone();
    let mut learners = new_learners(&game, 0, hp, stream);
    let mut collector = Collector::new(Control::Separate, hp.gamma, stream.child(1));
    let mut iterations = Vec::new();
    let mut env_steps = 0;
    let skipped = ppo_loop(&mut game, &mut learners, &mut collector, hp, budget, 0, &mut iterations, &mut env_steps);
    let policies: Vec<Policy> = learners.into_iter().map(|l| l.policy).collect();
    let final_eval = evaluate_separate(&game, &policies, &[], EVAL_EPISODES, eval_seed(seed))?;
    Ok(TrainReport {
        env: String::new(),
        algorithm: Algorithm::Separate,
        num_agents: game.num_agents(),
        seed,
        env_steps,
        iterations,
        final_eval,
        snapshot: Snapshot::Separate(policies),
        proposals: Vec::new(),
        acceptance_rate: None,
        skipped_updates: skipped,
    })
}

/// Greedy evaluation of per-agent policies, each seeing `extra` appended to
/// its observation.
pub fn evaluate_separate<G: MarkovGame>(game: &G, policies: &[Policy], extra: &[f64], episodes: usize, seed: u64) -> Result<EvalReport> {
    let agents: Vec<LearnedAgent<'_, G>> = policies
        .iter()
        .enumerate()
        .map(|(agent, policy)| LearnedAgent { game, policy, agent, control: Control::Separate, extra: extra.to_vec(), greedy: true })
        .collect();
    let refs: Vec<&dyn AgentPolicy<G::State>> = agents.iter().map(|a| a as &dyn AgentPolicy<G::State>).collect();
    evaluate_policies(&refs, game, episodes, seed)
}

/// Head of the factored joint policy, or an error when the joint action
/// space is too large.
pub fn joint_head<G: MarkovGame>(game: &G) -> Result<Head> {
    let parts: Vec<ActionPart> = (0..game.num_agents()).map(|i| ActionPart::from_space(game.action_space(i))).collect();
    let discrete: f64 = parts.iter().map(|p| p.choices.max(1) as f64).product();
    let dims: usize = parts.iter().map(ActionPart::dims).sum();
    if discrete > MAX_JOINT_DIM as f64 || dims > MAX_JOINT_DIM {
        return Err(contracting_core::Error::UnsupportedScale(format!(
            "joint action space has {discrete} discrete profiles and {dims} continuous dimensions"
        ))
        .into());
    }
    Ok(Head::new(parts))
}

/// One learner over the joint action space, rewarded with welfare.
pub fn train_joint<G: MarkovGame + Clone>(game: &G, hp: &Hyperparams, budget: u64, seed: u64) -> Result<TrainReport> {
    hp.validate()?;
    let head = joint_head(game)?;
    let stream = SeedStream::new(seed);
    let mut game = game.clone();
    let dim = observation_dim(&game, Control::Joint, 0);
    let mut learners = vec![Learner::new(dim, &hp.joint_hidden, head, hp, &mut stream.rng(0, Lane::Aux(1)))];
    let mut collector = Collector::new(Control::Joint, hp.gamma, stream.child(1));
    let mut iterations = Vec::new();
    let mut env_steps = 0;
    let skipped = ppo_loop(&mut game, &mut learners, &mut collector, hp, budget, 0, &mut iterations, &mut env_steps);
    let policy = learners.remove(0).policy;
    let agents: Vec<LearnedAgent<'_, G>> = (0..game.num_agents())
        .map(|agent| LearnedAgent { game: &game, policy: &policy, agent, control: Control::Joint, extra: Vec::new(), greedy: true })
        .collect();
    let refs: Vec<&dyn AgentPolicy<G::State>> = agents.iter().map(|a| a as &dyn AgentPolicy<G::State>).collect();
    let final_eval = evaluate_policies(&refs, &game, EVAL_EPISODES, eval_seed(seed))?;
    Ok(TrainReport {
        env: String::new(),
        algorithm: Algorithm::Joint,
        num_agents: game.num_agents(),
        seed,
        env_steps,
        iterations,
        final_eval,
        snapshot: Snapshot::Joint(policy),
        proposals: Vec::new(),
        acceptance_rate: None,
        skipped_updates: skipped,
    })
}

/// Separate training on the gifting-augmented game.
pub fn train_gifting<G: MarkovGame + Clone>(game: &G, max_gift: f64, hp: &Hyperparams, budget: u64, seed: u64) -> Result<TrainReport> {
    let gifting = gifting_augment(game.clone(), max_gift)?;
    let mut report = train_separate(&gifting, hp, budget, seed)?;
    report.algorithm = Algorithm::Gifting;
    Ok(report)
}

/// Contract-conditioned play policies produced by the first stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayProfile {
    pub policies: Vec<Policy>,
    /// Bounds of the transfer-rule parameters the policies condition on.
    pub bounds: Vec<(f64, f64)>,
    frozen: bool,
}

impl PlayProfile {
    pub fn new(policies: Vec<Policy>, bounds: Vec<(f64, f64)>) -> Self {
        Self { policies, bounds, frozen: false }
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Observation features for the rule parameters, scaled to `[-1, 1]`;
    /// zeros for the null contract.
    pub fn features<S>(&self, contract: &Contract<S>) -> Vec<f64> {
        if contract.is_null() {
            return vec![0.0; self.bounds.len()];
        }
        contract_features(&self.bounds, contract.params())
    }
}

fn contract_features(bounds: &[(f64, f64)], params: &[f64]) -> Vec<f64> {
    bounds
        .iter()
        .zip(params)
        .map(|((lo, hi), p)| if hi > lo { 2.0 * (p - lo) / (hi - lo) - 1.0 } else { 0.0 })
        .collect()
}

fn rule_bounds<S>(space: &ContractSpace<S>) -> Vec<(f64, f64)> {
    let mut b = space.param_bounds();
    if space.has_signing() {
        b.pop();
    }
    b
}

/// Output of the first contracting stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1 {
    pub profile: PlayProfile,
    pub iterations: Vec<IterationStats>,
    pub env_steps: u64,
    pub skipped_updates: usize,
}

/// Train play policies under uniformly sampled contracts, the contract's
/// parameters appended to every observation.
pub fn subgame_train_stage1<G>(game: &G, space: &ContractSpace<G::State>, hp: &Hyperparams, budget: u64, seed: u64) -> Result<Stage1>
where
    G: MarkovGame + Clone,
    G::State: 'static,
{
    hp.validate()?;
    let bounds = rule_bounds(space);
    let stream = SeedStream::new(seed);
    let mut contracted = ContractedGame::new(game.clone(), space.null_contract(), 0);
    let mut learners = new_learners(game, bounds.len(), hp, stream);
    let sampler = space.clone().without_signing();
    let feature_bounds = bounds.clone();
    let prepare = move |g: &mut ContractedGame<G>, rng: &mut ChaCha8Rng| {
        let contract = sampler.sample(rng);
        let features = contract_features(&feature_bounds, contract.params());
        g.set_contract(contract);
        features
    };
    let mut collector = Collector::new(Control::Separate, hp.gamma, stream.child(1)).with_prepare(Box::new(prepare));
    let mut iterations = Vec::new();
    let mut env_steps = 0;
    let skipped = ppo_loop(&mut contracted, &mut learners, &mut collector, hp, budget, 1, &mut iterations, &mut env_steps);
    let profile = PlayProfile::new(learners.into_iter().map(|l| l.policy).collect(), bounds).freeze();
    Ok(Stage1 { profile, iterations, env_steps, skipped_updates: skipped })
}

/// Proposer and acceptor policies of the second stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Negotiators {
    pub proposer: Policy,
    /// `None` at the proposer's index.
    pub acceptors: Vec<Option<Policy>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2 {
    pub negotiators: Negotiators,
    pub iterations: Vec<IterationStats>,
    pub env_steps: u64,
    pub proposals: Vec<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
    pub skipped_updates: usize,
}

/// Play one episode of the frozen profile under `contract`, at most
/// `max_steps` steps. Returns discounted returns, undiscounted totals and the
/// steps used.
fn play_episode<G: MarkovGame + Clone>(
    game: &mut ContractedGame<G>,
    profile: &PlayProfile,
    contract: Contract<G::State>,
    gamma: f64,
    stream: SeedStream,
    max_steps: usize,
) -> (Vec<f64>, Vec<f64>, usize) {
    let n = game.num_agents();
    let extra = profile.features(&contract);
    game.set_contract(contract);
    let mut state = game.initial_state(&mut stream.rng(0, Lane::Init));
    let (mut ret, mut totals) = (vec![0.0; n], vec![0.0; n]);
    let mut weight = 1.0;
    let mut t = 0;
    while t < game.horizon() && t < max_steps && !game.is_terminal(&state) {
        let actions: Vec<Action> = profile
            .policies
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let obs = observation(game, &state, Control::Separate, i, &extra);
                p.act(&obs, &mut stream.rng(t as u64, Lane::Agent(i))).remove(0)
            })
            .collect();
        let (next, r) = game.step(&state, &actions, &mut stream.rng(t as u64, Lane::Environment));
        for i in 0..n {
            ret[i] += weight * r[i];
            totals[i] += r[i];
        }
        weight *= gamma;
        state = next;
        t += 1;
    }
    (ret, totals, t)
}

fn proposer_obs<G: MarkovGame>(game: &G, agent: usize) -> Vec<f64> {
    let mut rng = SeedStream::new(0).rng(0, Lane::Init);
    game.observe(&game.initial_state(&mut rng), agent)
}

fn acceptor_obs<G: MarkovGame>(game: &G, agent: usize, space_bounds: &[(f64, f64)], params: &[f64]) -> Vec<f64> {
    let mut obs = proposer_obs(game, agent);
    obs.extend(contract_features(space_bounds, params));
    obs
}

/// Train the proposer and the acceptors against a frozen play profile.
pub fn negotiation_train_stage2<G>(
    game: &G,
    space: &ContractSpace<G::State>,
    profile: &PlayProfile,
    hp: &Hyperparams,
    budget: u64,
    seed: u64,
) -> Result<Stage2>
where
    G: MarkovGame + Clone,
{
    if !profile.is_frozen() {
        return Err(contracting_core::Error::ContractViolation("play profile must be frozen before negotiation training".into()).into());
    }
    hp.validate()?;
    let n = game.num_agents();
    let proposer = space.proposer();
    let bounds = space.param_bounds();
    let stream = SeedStream::new(seed).child(2);
    let mut rng = stream.rng(0, Lane::Aux(1));
    let prop_head = Head::new(vec![ActionPart {
        choices: 0,
        low: bounds.iter().map(|b| b.0).collect(),
        high: bounds.iter().map(|b| b.1).collect(),
    }]);
    let obs_dim = game.observation_dim();
    let mut prop_learner = Learner::new(obs_dim, &hp.hidden, prop_head, hp, &mut rng);
    let mut acc_learners: Vec<Option<Learner>> = (0..n)
        .map(|i| {
            (i != proposer).then(|| {
                let head = Head::new(vec![ActionPart { choices: 2, low: vec![], high: vec![] }]);
                Learner::new(obs_dim + bounds.len(), &hp.hidden, head, hp, &mut rng)
            })
        })
        .collect();
    let mut contracted = ContractedGame::new(game.clone(), space.null_contract(), 0);
    let mut iterations = Vec::new();
    let (mut drawn, mut episode) = (0u64, 0u64);
    let mut proposals = Vec::new();
    let mut acceptance_rate = None;
    let mut skipped = 0;
    let p_obs = proposer_obs(game, proposer);
    while drawn < budget {
        let mut prop_batch = crate::ppo::Batch::default();
        let mut acc_batches = vec![crate::ppo::Batch::default(); n];
        let mut totals_sum = vec![0.0; n];
        let mut params_sum = vec![0.0; bounds.len()];
        let (mut episodes, mut accepted_count) = (0usize, 0usize);
        proposals.clear();
        while episodes < hp.stage2_episodes && drawn < budget {
            let ep = stream.child(episode + 1);
            episode += 1;
            let ps = prop_learner.act(&p_obs, &mut ep.rng(0, Lane::Agent(proposer)));
            let params = prop_head_params(&prop_learner.policy, &ps.raw);
            let mut votes = vec![true; n];
            let mut acc_samples = Vec::new();
            for (i, learner) in acc_learners.iter().enumerate() {
                if let Some(l) = learner {
                    let obs = acceptor_obs(game, i, &bounds, &params);
                    let s = l.act(&obs, &mut ep.rng(0, Lane::Agent(i)));
                    votes[i] = s.choices[0] == 1;
                    acc_samples.push((i, obs, s));
                }
            }
            let accepted = votes.iter().all(|&v| v);
            let contract = if accepted { space.contract(&params)? } else { space.null_contract() };
            let signing = contract.signing_delta().to_vec();
            let (ret, totals, steps) = play_episode(&mut contracted, profile, contract, hp.gamma, ep.child(0), (budget - drawn) as usize);
            drawn += steps as u64;
            let value: Vec<f64> = (0..n).map(|i| ret[i] + signing[i]).collect();
            prop_batch.push(p_obs.clone(), ps, value[proposer]);
            for (i, obs, s) in acc_samples {
                acc_batches[i].push(obs, s, value[i]);
            }
            for i in 0..n {
                totals_sum[i] += totals[i] + signing[i];
            }
            for (acc, p) in params_sum.iter_mut().zip(&params) {
                *acc += p;
            }
            proposals.push(params);
            episodes += 1;
            accepted_count += usize::from(accepted);
            if steps == 0 {
                break;
            }
        }
        let iteration = iterations.len();
        let mut urng = stream.rng(iteration as u64 + 1, Lane::Aux(2));
        if prop_learner.update(&prop_batch, hp, hp.stage2_minibatch, &mut urng).is_err() {
            skipped += 1;
        }
        for (l, batch) in acc_learners.iter_mut().zip(&acc_batches) {
            if let Some(l) = l {
                if l.update(batch, hp, hp.stage2_minibatch, &mut urng).is_err() {
                    skipped += 1;
                }
            }
        }
        let k = episodes.max(1) as f64;
        let agent_rewards: Vec<f64> = totals_sum.iter().map(|t| t / k).collect();
        let rate = accepted_count as f64 / k;
        acceptance_rate = Some(rate);
        iterations.push(IterationStats {
            iteration,
            stage: 2,
            env_steps: drawn,
            social_reward: agent_rewards.iter().sum(),
            agent_rewards,
            contract_params: Some(params_sum.iter().map(|p| p / k).collect()),
            acceptance_rate: Some(rate),
        });
    }
    let negotiators = Negotiators {
        proposer: prop_learner.policy,
        acceptors: acc_learners.into_iter().map(|l| l.map(|l| l.policy)).collect(),
    };
    Ok(Stage2 { negotiators, iterations, env_steps: drawn, proposals, acceptance_rate, skipped_updates: skipped })
}

fn prop_head_params(policy: &Policy, raw: &[f64]) -> Vec<f64> {
    policy.head.parts[0].squash(raw)
}

/// Split a contracting budget into the two stages; the second gets at most
/// a tenth of the first.
pub fn stage_budgets(budget: u64) -> (u64, u64) {
    let first = (budget as f64 / 1.1).ceil() as u64;
    let first = first.min(budget);
    let second = (budget - first).min(first / 10);
    (first, second)
}

/// Both contracting stages followed by a greedy evaluation of the whole
/// negotiate-then-play profile.
pub fn train_contracting<G>(game: &G, space: &ContractSpace<G::State>, hp: &Hyperparams, budget: u64, seed: u64) -> Result<TrainReport>
where
    G: MarkovGame + Clone,
    G::State: 'static,
{
    let (b1, b2) = stage_budgets(budget);
    let stage1 = subgame_train_stage1(game, space, hp, b1, seed)?;
    let stage2 = negotiation_train_stage2(game, space, &stage1.profile, hp, b2, seed)?;
    let mut iterations = stage1.iterations;
    let offset = stage1.env_steps;
    let base = iterations.len();
    iterations.extend(stage2.iterations.into_iter().map(|mut it| {
        it.iteration += base;
        it.env_steps += offset;
        it
    }));
    let final_eval = evaluate_contracting(game, space, &stage1.profile, &stage2.negotiators, EVAL_EPISODES, eval_seed(seed))?;
    Ok(TrainReport {
        env: String::new(),
        algorithm: Algorithm::Contracting,
        num_agents: game.num_agents(),
        seed,
        env_steps: stage1.env_steps + stage2.env_steps,
        iterations,
        final_eval,
        snapshot: Snapshot::Contracting {
            play: stage1.profile.policies,
            proposer: stage2.negotiators.proposer,
            acceptors: stage2.negotiators.acceptors,
        },
        proposals: stage2.proposals,
        acceptance_rate: stage2.acceptance_rate,
        skipped_updates: stage1.skipped_updates + stage2.skipped_updates,
    })
}

/// One agent of the augmented game driven by negotiation and play policies.
pub struct ContractingAgent<'a, G: MarkovGame> {
    pub game: &'a G,
    pub space: &'a ContractSpace<G::State>,
    pub profile: &'a PlayProfile,
    pub negotiators: &'a Negotiators,
    pub agent: usize,
    pub greedy: bool,
}

impl<G: MarkovGame> AgentPolicy<AugmentedState<G::State>> for ContractingAgent<'_, G> {
    fn act(&self, state: &AugmentedState<G::State>, rng: &mut ChaCha8Rng) -> Action {
        let pick = |p: &Policy, obs: &[f64], rng: &mut ChaCha8Rng| {
            if self.greedy { p.act_greedy(obs) } else { p.act(obs, rng) }.remove(0)
        };
        match state {
            AugmentedState::Propose { base, proposer } if *proposer == self.agent => {
                let obs = self.game.observe(base, self.agent);
                proposal(pick(&self.negotiators.proposer, &obs, rng).values)
            }
            AugmentedState::Propose { .. } => proposal(Vec::new()),
            AugmentedState::AwaitAcceptance { base, pending, .. } => match &self.negotiators.acceptors[self.agent] {
                Some(p) => {
                    let mut params = pending.params().to_vec();
                    params.extend(pending_signing(self.space, pending));
                    let mut obs = self.game.observe(base, self.agent);
                    obs.extend(contract_features(&self.space.param_bounds(), &params));
                    vote(pick(p, &obs, rng).choice == Some(1))
                }
                None => vote(true),
            },
            AugmentedState::Play { base, contract } => {
                let extra = match contract {
                    Some(c) => self.profile.features(c),
                    None => vec![0.0; self.profile.bounds.len()],
                };
                let mut obs = self.game.observe(base, self.agent);
                obs.extend(extra);
                pick(&self.profile.policies[self.agent], &obs, rng)
            }
        }
    }
}

/// Recover the signing parameter of a pending contract.
fn pending_signing<S>(space: &ContractSpace<S>, contract: &Contract<S>) -> Option<f64> {
    if !space.has_signing() {
        return None;
    }
    let n = contract.num_agents() as f64;
    Some(contract.signing_delta()[space.proposer()] / (n - 1.0))
}

pub fn evaluate_contracting<G: MarkovGame + Clone>(
    game: &G,
    space: &ContractSpace<G::State>,
    profile: &PlayProfile,
    negotiators: &Negotiators,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let aug = augment_single_proposer(game.clone(), space.clone());
    let agents: Vec<ContractingAgent<'_, G>> = (0..game.num_agents())
        .map(|agent| ContractingAgent { game, space, profile, negotiators, agent, greedy: true })
        .collect();
    let refs: Vec<&dyn AgentPolicy<AugmentedState<G::State>>> =
        agents.iter().map(|a| a as &dyn AgentPolicy<AugmentedState<G::State>>).collect();
    evaluate_policies(&refs, &aug, episodes, seed)
}
