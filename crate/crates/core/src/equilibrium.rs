//! Exact equilibrium analysis of finite stage games and the single-proposer
//! contracting game built on them.

use std::cmp::Ordering;
use std::hash::Hash;

use crate::contract::{Contract, ContractSpace};
use crate::envs::matrix::{MatrixGame, MatrixState};
use crate::error::{Error, Result};
use crate::game::{cartesian, exact_values, Action, FiniteMarkovGame, JointPolicyTable, MarkovGame};

const TOL: f64 = 1e-9;

/// Largest `|S| * |A|` accepted by the Markov-game brute force.
pub const MAX_BRUTEFORCE_SIZE: usize = 10_000;
/// Largest horizon accepted by the Markov-game brute force.
pub const MAX_BRUTEFORCE_HORIZON: usize = 3;
/// Largest number of stationary joint policies enumerated.
pub const MAX_BRUTEFORCE_POLICIES: usize = 1 << 20;

/// A finite normal-form game played at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct StageGame<S> {
    pub state: S,
    pub labels: Vec<Vec<String>>,
    pub actions: Vec<Vec<Action>>,
    /// Indexed by joint profile, first agent most significant.
    pub payoffs: Vec<Vec<f64>>,
}

impl<S: Clone> StageGame<S> {
    /// Tabulate `game`'s one-step rewards at `state` over the given action sets.
    pub fn from_game<G>(game: &G, state: S, actions: Vec<Vec<(String, Action)>>) -> Result<Self>
    where
        G: MarkovGame<State = S>,
    {
        if actions.len() != game.num_agents() || actions.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("need a non-empty action list per agent".into()));
        }
        for (i, set) in actions.iter().enumerate() {
            for (_, a) in set {
                game.check_action(&state, i, a)?;
            }
        }
        let labels: Vec<Vec<String>> = actions.iter().map(|s| s.iter().map(|(l, _)| l.clone()).collect()).collect();
        let actions: Vec<Vec<Action>> = actions.into_iter().map(|s| s.into_iter().map(|(_, a)| a).collect()).collect();
        let payoffs = cartesian(&actions).iter().map(|joint| game.reward(&state, joint)).collect();
        Ok(Self { state, labels, actions, payoffs })
    }

    /// One-dimensional continuous actions restricted to `levels` for every agent.
    pub fn from_levels<G>(game: &G, state: S, levels: &[f64]) -> Result<Self>
    where
        G: MarkovGame<State = S>,
    {
        let set: Vec<(String, Action)> = levels.iter().map(|&v| (format!("{v}"), Action::scalar(v))).collect();
        Self::from_game(game, state, vec![set; game.num_agents()])
    }

    pub fn num_agents(&self) -> usize {
        self.labels.len()
    }

    /// Signing-transfer interval wide enough to move any payoff anywhere:
    /// plus or minus the payoff spread.
    pub fn signing_range(&self) -> (f64, f64) {
        let flat = self.payoffs.iter().flatten();
        let hi = flat.clone().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lo = flat.fold(f64::INFINITY, |m, &v| m.min(v));
        (lo - hi, hi - lo)
    }

    pub fn profiles(&self) -> Vec<Vec<usize>> {
        let sets: Vec<Vec<usize>> = self.labels.iter().map(|l| (0..l.len()).collect()).collect();
        cartesian(&sets)
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.labels).fold(0, |acc, (&a, l)| acc * l.len() + a)
    }

    pub fn payoff(&self, profile: &[usize]) -> &[f64] {
        &self.payoffs[self.index(profile)]
    }

    pub fn welfare(&self, profile: &[usize]) -> f64 {
        self.payoff(profile).iter().sum()
    }

    pub fn joint_action(&self, profile: &[usize]) -> Vec<Action> {
        profile.iter().enumerate().map(|(i, &a)| self.actions[i][a].clone()).collect()
    }

    pub fn profile_labels(&self, profile: &[usize]) -> Vec<String> {
        profile.iter().enumerate().map(|(i, &a)| self.labels[i][a].clone()).collect()
    }
}

impl StageGame<MatrixState> {
    /// The play stage of a matrix game.
    pub fn from_matrix(game: &MatrixGame) -> Result<Self> {
        let actions = game
            .spec()
            .labels
            .iter()
            .map(|l| l.iter().enumerate().map(|(k, s)| (s.clone(), Action::discrete(k))).collect())
            .collect();
        Self::from_game(game, MatrixState::Start, actions)
    }
}

/// Every profile from which no agent gains strictly by deviating alone.
pub fn enumerate_pure_nash<S: Clone>(game: &StageGame<S>) -> Vec<Vec<usize>> {
    game.profiles().into_iter().filter(|p| is_pure_nash(game, p)).collect()
}

pub fn is_pure_nash<S: Clone>(game: &StageGame<S>, profile: &[usize]) -> bool {
    (0..game.num_agents()).all(|i| {
        let own = game.payoff(profile)[i];
        (0..game.labels[i].len()).all(|alt| {
            let mut dev = profile.to_vec();
            dev[i] = alt;
            game.payoff(&dev)[i] <= own + TOL
        })
    })
}

/// Shift every payoff by the contract's transfers. Signing transfers are not
/// included.
pub fn apply_contract_to_stage_game<S: Clone>(game: &StageGame<S>, contract: &Contract<S>) -> StageGame<S> {
    let mut out = game.clone();
    for (profile, row) in game.profiles().iter().zip(out.payoffs.iter_mut()) {
        let delta = contract.transfer_delta(&game.state, &game.joint_action(profile));
        for (r, d) in row.iter_mut().zip(delta) {
            *r += d;
        }
    }
    out
}

/// Selected play of a stage game.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlay {
    pub profile: Vec<usize>,
    pub values: Vec<f64>,
    /// True when no pure equilibrium existed and maximin play was used.
    pub maximin: bool,
}

/// Welfare-maximal pure Nash equilibrium; ties go to the lexicographically
/// smallest profile.
pub fn solve_stage_equilibrium<S: Clone>(game: &StageGame<S>) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for p in enumerate_pure_nash(game) {
        let w = game.welfare(&p);
        if best.as_ref().is_none_or(|(_, bw)| w > bw + TOL) {
            best = Some((p, w));
        }
    }
    let (profile, _) = best.ok_or(Error::NoPureEquilibrium)?;
    let values = game.payoff(&profile).to_vec();
    Ok((profile, values))
}

/// Each agent's maximin action and security level.
pub fn maximin_play<S: Clone>(game: &StageGame<S>) -> StagePlay {
    let profiles = game.profiles();
    let n = game.num_agents();
    let mut profile = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..game.labels[i].len() {
            let worst = profiles
                .iter()
                .filter(|p| p[i] == a)
                .map(|p| game.payoff(p)[i])
                .fold(f64::INFINITY, f64::min);
            if worst > best.1 + TOL {
                best = (a, worst);
            }
        }
        profile.push(best.0);
        values.push(best.1);
    }
    StagePlay { profile, values, maximin: true }
}

/// Pure equilibrium play, or flagged maximin play when none exists.
pub fn solve_stage_or_maximin<S: Clone>(game: &StageGame<S>) -> StagePlay {
    match solve_stage_equilibrium(game) {
        Ok((profile, values)) => StagePlay { profile, values, maximin: false },
        Err(_) => maximin_play(game),
    }
}

/// One contract examined by the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractOutcome {
    /// `None` for the null contract.
    pub params: Option<Vec<f64>>,
    pub accepted: bool,
    pub acceptance: Vec<bool>,
    pub play: StagePlay,
    /// Play payoffs plus signing transfers.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeSolution {
    pub family: String,
    pub proposer: usize,
    /// `None` when the null contract is chosen.
    pub params: Option<Vec<f64>>,
    pub acceptance: Vec<bool>,
    pub profile: Vec<usize>,
    pub profile_labels: Vec<String>,
    pub values: Vec<f64>,
    pub welfare: f64,
    pub rejection_profile: Vec<usize>,
    pub rejection_values: Vec<f64>,
    pub grid_step: f64,
    /// True if any evaluated play fell back to maximin values.
    pub used_maximin: bool,
    pub outcomes: Vec<ContractOutcome>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Backward induction of the single-proposer contracting game.
///
/// Errors if some stage game on the path has no pure equilibrium; use
/// [`solve_contract_spe_with_fallback`] to allow flagged maximin play.
pub fn solve_contract_spe<S: Clone>(base: &StageGame<S>, family: &ContractSpace<S>, grid_step: f64) -> Result<SpeSolution> {
    solve(base, family, grid_step, false)
}

pub fn solve_contract_spe_with_fallback<S: Clone>(
    base: &StageGame<S>,
    family: &ContractSpace<S>,
    grid_step: f64,
) -> Result<SpeSolution> {
    solve(base, family, grid_step, true)
}

fn play(game: &StageGame<impl Clone>, fallback: bool) -> Result<StagePlay> {
    if fallback {
        Ok(solve_stage_or_maximin(game))
    } else {
        let (profile, values) = solve_stage_equilibrium(game)?;
        Ok(StagePlay { profile, values, maximin: false })
    }
}

fn solve<S: Clone>(base: &StageGame<S>, family: &ContractSpace<S>, grid_step: f64, fallback: bool) -> Result<SpeSolution> {
    let n = base.num_agents();
    if family.num_agents() != n {
        return Err(Error::InvalidParameter(format!("family built for {} agents, game has {n}", family.num_agents())));
    }
    let proposer = family.proposer();
    let rejection = play(base, fallback)?;

    let mut candidates: Vec<(Option<Vec<f64>>, Contract<S>)> = vec![(None, family.null_contract())];
    for params in family.grid(grid_step)? {
        let c = family.contract(&params)?;
        candidates.push((Some(params), c));
    }

    let mut outcomes = Vec::with_capacity(candidates.len());
    for (params, contract) in candidates {
        let modified = apply_contract_to_stage_game(base, &contract);
        let stage = play(&modified, fallback)?;
        let values: Vec<f64> = stage.values.iter().zip(contract.signing_delta()).map(|(v, s)| v + s).collect();
        let acceptance: Vec<bool> = (0..n)
            .map(|i| i == proposer || values[i] >= rejection.values[i] - TOL)
            .collect();
        let accepted = acceptance.iter().all(|&a| a);
        outcomes.push(ContractOutcome { params, accepted, acceptance, play: stage, values });
    }

    // Candidates are ordered null first, then lexicographically; the first
    // strict maximum wins ties.
    let mut chosen: Option<usize> = None;
    for (k, o) in outcomes.iter().enumerate() {
        if !o.accepted {
            continue;
        }
        if chosen.is_none_or(|c| o.values[proposer] > outcomes[c].values[proposer] + TOL) {
            chosen = Some(k);
        }
    }
    debug_assert!(outcomes.windows(2).skip(1).all(|w| {
        lex_cmp(w[0].params.as_deref().unwrap_or(&[]), w[1].params.as_deref().unwrap_or(&[])) != Ordering::Greater
    }));
    // The null contract reproduces the rejection values, so it is always accepted.
    let best = &outcomes[chosen.expect("null contract is always accepted")];
    let used_maximin = rejection.maximin || outcomes.iter().any(|o| o.play.maximin);
    Ok(SpeSolution {
        family: family.family_id().to_string(),
        proposer,
        params: best.params.clone(),
        acceptance: best.acceptance.clone(),
        profile: best.play.profile.clone(),
        profile_labels: base.profile_labels(&best.play.profile),
        values: best.values.clone(),
        welfare: best.values.iter().sum(),
        rejection_profile: rejection.profile.clone(),
        rejection_values: rejection.values.clone(),
        grid_step,
        used_maximin,
        outcomes,
    })
}

/// Welfare-maximal profile; ties go to the lexicographically smallest.
pub fn max_welfare_bruteforce<S: Clone>(game: &StageGame<S>) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for p in game.profiles() {
        let w = game.welfare(&p);
        if best.as_ref().is_none_or(|(_, bw)| w > bw + TOL) {
            best = Some((p, w));
        }
    }
    best.expect("stage games have at least one profile")
}

/// `W(pi*) - sum_{i != proposer} V_i(pi)`, with `pi` the rejection play.
pub fn proposer_value_upper_bound<S: Clone>(game: &StageGame<S>, proposer: usize) -> Result<f64> {
    let (_, optimum) = max_welfare_bruteforce(game);
    let (_, rejection) = solve_stage_equilibrium(game)?;
    Ok(optimum - rejection.iter().enumerate().filter(|(i, _)| *i != proposer).map(|(_, v)| v).sum::<f64>())
}

/// Exhaustive search over stationary deterministic joint policies of a small
/// finite Markov game, scored by welfare from the initial state.
pub fn max_welfare_markov<G>(game: &G) -> Result<(JointPolicyTable<G::State>, f64)>
where
    G: FiniteMarkovGame,
    G::State: Eq + Hash,
{
    let joint = game.joint_actions()?;
    let states: Vec<G::State> = game.states().into_iter().filter(|s| !game.is_terminal(s)).collect();
    let size = game.states().len() * joint.len();
    if game.horizon() > MAX_BRUTEFORCE_HORIZON || size > MAX_BRUTEFORCE_SIZE {
        return Err(Error::UnsupportedScale(format!(
            "|S|*|A| = {size}, horizon {} exceed brute-force limits",
            game.horizon()
        )));
    }
    let count = (joint.len() as f64).powi(states.len() as i32);
    if count > MAX_BRUTEFORCE_POLICIES as f64 {
        return Err(Error::UnsupportedScale(format!("{count} stationary policies to enumerate")));
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let start = game.initial_state(&mut rng);
    let choice_sets: Vec<Vec<usize>> = states.iter().map(|_| (0..joint.len()).collect()).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for assignment in cartesian(&choice_sets) {
        let policy = |s: &G::State| {
            let k = states.iter().position(|x| x == s).expect("non-terminal state");
            joint[assignment[k]].clone()
        };
        let w: f64 = exact_values(game, &policy, &start, game.horizon()).iter().sum();
        if best.as_ref().is_none_or(|(_, bw)| w > bw + TOL) {
            best = Some((assignment, w));
        }
    }
    let (assignment, w) = best.ok_or_else(|| Error::Unsupported("game has no non-terminal states".into()))?;
    let table = JointPolicyTable::deterministic(states.into_iter().zip(assignment).map(|(s, k)| (s, joint[k].clone())).collect());
    Ok((table, w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub holds: bool,
    pub gap: f64,
    pub tolerance: f64,
    pub optimum: f64,
    pub welfare: f64,
}

/// Compare the solved welfare with the brute-force social optimum, allowing
/// `grid_step * N` of discretization slack.
pub fn verify_social_optimality<S: Clone>(solution: &SpeSolution, base: &StageGame<S>) -> OptimalityReport {
    let (_, optimum) = max_welfare_bruteforce(base);
    let gap = (optimum - solution.welfare).abs();
    let tolerance = solution.grid_step * base.num_agents() as f64;
    OptimalityReport { holds: gap <= tolerance + TOL, gap, tolerance, optimum, welfare: solution.welfare }
}

/// Whether `profile` followed by zero gifts is subgame perfect once every
/// agent may gift each other agent an amount from `{0, step, ..., max_gift}`
/// after play.
pub fn zero_gift_spe<S: Clone>(base: &StageGame<S>, profile: &[usize], max_gift: f64, step: f64) -> Result<bool> {
    if !(step > 0.0) || max_gift < 0.0 {
        return Err(Error::InvalidParameter("gift grid needs step > 0 and max_gift >= 0".into()));
    }
    let n = base.num_agents();
    let levels: Vec<f64> = {
        let k = (max_gift / step + 1e-9).floor() as usize;
        (0..=k).map(|j| j as f64 * step).collect()
    };
    let per_agent: Vec<Vec<Vec<f64>>> = (0..n).map(|_| cartesian(&vec![levels.clone(); n - 1])).collect();
    let zero = vec![0usize; n];
    for p in base.profiles() {
        // Gift subgame after play `p`: one choice per agent, a gift to each other agent.
        let labels: Vec<Vec<String>> = per_agent.iter().map(|c| c.iter().map(|g| format!("{g:?}")).collect()).collect();
        let choice_sets: Vec<Vec<usize>> = per_agent.iter().map(|c| (0..c.len()).collect()).collect();
        let payoffs = cartesian(&choice_sets)
            .iter()
            .map(|choice| {
                let mut r = base.payoff(&p).to_vec();
                for (giver, &c) in choice.iter().enumerate() {
                    let gifts = &per_agent[giver][c];
                    for (k, g) in gifts.iter().enumerate() {
                        let recipient = if k < giver { k } else { k + 1 };
                        r[giver] -= g;
                        r[recipient] += g;
                    }
                }
                r
            })
            .collect();
        let actions = labels.iter().map(|l| (0..l.len()).map(Action::discrete).collect()).collect();
        let sub = StageGame { state: (), labels, actions, payoffs };
        if !is_pure_nash(&sub, &zero) {
            return Ok(false);
        }
    }
    // With zero gifts everywhere the play stage reduces to the base game.
    Ok(is_pure_nash(base, profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::matrix::{make_pd, make_stag_hunt};

    fn pd2() -> (StageGame<MatrixState>, ContractSpace<MatrixState>) {
        let (g, space) = make_pd(2).unwrap();
        (StageGame::from_matrix(&g).unwrap(), space)
    }

    #[test]
    fn pd_nash_and_optimum() {
        let (g, _) = pd2();
        assert_eq!(enumerate_pure_nash(&g), vec![vec![1, 1]]);
        assert_eq!(max_welfare_bruteforce(&g), (vec![0, 0], -2.0));
        assert_eq!(solve_stage_equilibrium(&g).unwrap(), (vec![1, 1], vec![-2.0, -2.0]));
    }

    #[test]
    fn fine_of_one_and_a_half() {
        let (g, space) = pd2();
        let c = space.contract(&[1.5]).unwrap();
        let m = apply_contract_to_stage_game(&g, &c);
        assert_eq!(m.payoffs, vec![vec![-1.0, -1.0], vec![-1.5, -1.5], vec![-1.5, -1.5], vec![-2.0, -2.0]]);
        assert_eq!(enumerate_pure_nash(&m), vec![vec![0, 0]]);
    }

    #[test]
    fn matching_pennies_has_no_pure_equilibrium() {
        let payoffs = vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0]];
        let labels = vec![vec!["H".to_string(), "T".to_string()]; 2];
        let actions = vec![vec![Action::discrete(0), Action::discrete(1)]; 2];
        let g = StageGame { state: (), labels, actions, payoffs };
        assert!(matches!(solve_stage_equilibrium(&g), Err(Error::NoPureEquilibrium)));
        let fb = solve_stage_or_maximin(&g);
        assert!(fb.maximin);
        assert_eq!(fb.values, vec![-1.0, -1.0]);
    }

    #[test]
    fn stag_hunt_bound() {
        let (g, _) = make_stag_hunt(false).unwrap();
        let s = StageGame::from_matrix(&g).unwrap();
        assert_eq!(enumerate_pure_nash(&s), vec![vec![0, 0]]);
        assert_eq!(proposer_value_upper_bound(&s, 0).unwrap(), 4.0);
    }

    #[test]
    fn null_only_family_keeps_dilemma() {
        let (g, _) = pd2();
        let sol = solve_contract_spe(&g, &ContractSpace::null_only(2), 0.25).unwrap();
        assert_eq!(sol.params, None);
        assert_eq!(sol.welfare, -4.0);
        let r = verify_social_optimality(&sol, &g);
        assert!(!r.holds);
        assert_eq!(r.gap, 2.0);
    }
}
