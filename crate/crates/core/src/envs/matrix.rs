//! One-shot matrix games: N-agent Prisoner's Dilemma and Stag Hunt.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::contract::{ActionFine, ContractSpace};
use crate::error::{Error, Result};
use crate::game::{cartesian, Action, ActionSpace, FiniteMarkovGame, MarkovGame};

/// Matrix-game horizon: the play step plus a slot for post-play gifting.
pub const MATRIX_HORIZON: usize = 2;
pub const DISCOUNT: f64 = 0.99;

const COOPERATE: usize = 0;
const DEFECT: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MatrixState {
    Start,
    /// Terminal. Holds the joint action when the game records profiles.
    Done(Vec<usize>),
}

/// Complete payoff table over joint actions.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGameSpec {
    pub labels: Vec<Vec<String>>,
    /// Indexed by joint profile, first agent most significant.
    pub payoffs: Vec<Vec<f64>>,
}

impl MatrixGameSpec {
    pub fn new(labels: Vec<Vec<String>>, payoffs: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        let size: usize = labels.iter().map(Vec::len).product();
        if n < 2 || labels.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("matrix game needs >= 2 agents with >= 1 action".into()));
        }
        if payoffs.len() != size || payoffs.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidParameter(format!(
                "payoff table must have {size} rows of {n} entries"
            )));
        }
        Ok(Self { labels, payoffs })
    }

    /// Build from a payoff function over profiles.
    pub fn from_fn(labels: Vec<Vec<String>>, f: impl Fn(&[usize]) -> Vec<f64>) -> Result<Self> {
        let sets: Vec<Vec<usize>> = labels.iter().map(|l| (0..l.len()).collect()).collect();
        let payoffs = cartesian(&sets).iter().map(|p| f(p)).collect();
        Self::new(labels, payoffs)
    }

    pub fn num_agents(&self) -> usize {
        self.labels.len()
    }

    pub fn profile_index(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.labels)
            .fold(0, |acc, (&a, l)| acc * l.len() + a)
    }

    pub fn payoff(&self, profile: &[usize]) -> &[f64] {
        &self.payoffs[self.profile_index(profile)]
    }
}

#[derive(Clone, Debug)]
pub struct MatrixGame {
    name: String,
    spec: MatrixGameSpec,
    spaces: Vec<ActionSpace>,
    record_profile: bool,
    reward_bound: f64,
}

impl MatrixGame {
    pub fn new(name: impl Into<String>, spec: MatrixGameSpec) -> Result<Self> {
        let spaces = spec
            .labels
            .iter()
            .map(|l| ActionSpace::discrete(l.iter().cloned()))
            .collect::<Result<Vec<_>>>()?;
        let reward_bound = spec.payoffs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { name: name.into(), spec, spaces, record_profile: true, reward_bound })
    }

    /// Collapse every outcome into one terminal state.
    pub fn without_profile_record(mut self) -> Self {
        self.record_profile = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &MatrixGameSpec {
        &self.spec
    }

    fn profile(actions: &[Action]) -> Vec<usize> {
        actions.iter().map(Action::index).collect()
    }
}

impl MarkovGame for MatrixGame {
    type State = MatrixState;

    fn num_agents(&self) -> usize {
        self.spec.num_agents()
    }

    fn action_space(&self, agent: usize) -> &ActionSpace {
        &self.spaces[agent]
    }

    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> MatrixState {
        MatrixState::Start
    }

    fn transition(&self, _state: &MatrixState, actions: &[Action], _rng: &mut ChaCha8Rng) -> MatrixState {
        if self.record_profile {
            MatrixState::Done(Self::profile(actions))
        } else {
            MatrixState::Done(Vec::new())
        }
    }

    fn reward(&self, state: &MatrixState, actions: &[Action]) -> Vec<f64> {
        match state {
            MatrixState::Start => self.spec.payoff(&Self::profile(actions)).to_vec(),
            MatrixState::Done(_) => vec![0.0; self.num_agents()],
        }
    }

    fn is_terminal(&self, state: &MatrixState) -> bool {
        matches!(state, MatrixState::Done(_))
    }

    fn discount(&self) -> f64 {
        DISCOUNT
    }

    fn horizon(&self) -> usize {
        MATRIX_HORIZON
    }

    fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// `[at_start, one-hot of each agent's played action...]`
    fn observe(&self, state: &MatrixState, _agent: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.observation_dim()];
        match state {
            MatrixState::Start => obs[0] = 1.0,
            MatrixState::Done(profile) => {
                let mut offset = 1;
                for (i, l) in self.spec.labels.iter().enumerate() {
                    if let Some(&a) = profile.get(i) {
                        obs[offset + a] = 1.0;
                    }
                    offset += l.len();
                }
            }
        }
        obs
    }

    fn observation_dim(&self) -> usize {
        1 + self.spec.labels.iter().map(Vec::len).sum::<usize>()
    }

    fn is_one_shot(&self) -> bool {
        true
    }
}

impl FiniteMarkovGame for MatrixGame {
    fn states(&self) -> Vec<MatrixState> {
        let mut out = vec![MatrixState::Start];
        if self.record_profile {
            let sets: Vec<Vec<usize>> = self.spec.labels.iter().map(|l| (0..l.len()).collect()).collect();
            out.extend(cartesian(&sets).into_iter().map(MatrixState::Done));
        } else {
            out.push(MatrixState::Done(Vec::new()));
        }
        out
    }

    fn transition_support(&self, state: &MatrixState, actions: &[Action]) -> Vec<(MatrixState, f64)> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        vec![(self.transition(state, actions, &mut rng), 1.0)]
    }
}

fn cd_labels(n: usize) -> Vec<Vec<String>> {
    vec![vec!["C".to_string(), "D".to_string()]; n]
}

/// Payoffs of the N-agent Prisoner's Dilemma.
///
/// Two agents use the classic table. With more agents: everyone cooperating
/// earns `N` each, everyone defecting earns 1 each, otherwise cooperators get
/// 0 and defectors `N + 1`.
pub fn pd_payoffs(n: usize, profile: &[usize]) -> Vec<f64> {
    if n == 2 {
        return match (profile[0], profile[1]) {
            (COOPERATE, COOPERATE) => vec![-1.0, -1.0],
            (COOPERATE, _) => vec![-3.0, 0.0],
            (_, COOPERATE) => vec![0.0, -3.0],
            _ => vec![-2.0, -2.0],
        };
    }
    let defectors = profile.iter().filter(|&&a| a == DEFECT).count();
    let nf = n as f64;
    profile
        .iter()
        .map(|&a| match (defectors, a) {
            (0, _) => nf,
            (d, _) if d == n => 1.0,
            (_, COOPERATE) => 0.0,
            _ => nf + 1.0,
        })
        .collect()
}

/// Prisoner's Dilemma with the per-defector fine family `theta in [0, N]`.
pub fn make_pd(n: usize) -> Result<(MatrixGame, ContractSpace<MatrixState>)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("prisoner's dilemma needs N >= 2, got {n}")));
    }
    let spec = MatrixGameSpec::from_fn(cd_labels(n), |p| pd_payoffs(n, p))?;
    let game = MatrixGame::new(format!("pd{n}"), spec)?;
    let space = ContractSpace::new(Arc::new(ActionFine::new(DEFECT, "defection_fine")), vec![(0.0, n as f64)], n)?;
    Ok((game, space))
}

/// Two-agent Stag Hunt with a fine on playing D, `theta in [0, 4]`.
///
/// The default table is the one printed with the bundled experiments, in
/// which C is dominant; `canonical` swaps the off-diagonal payoffs to the
/// usual coordination structure.
pub fn make_stag_hunt(canonical: bool) -> Result<(MatrixGame, ContractSpace<MatrixState>)> {
    let (cd, dc) = if canonical { ([1.0, 3.0], [3.0, 1.0]) } else { ([3.0, 1.0], [1.0, 3.0]) };
    let payoffs = vec![vec![4.0, 4.0], cd.to_vec(), dc.to_vec(), vec![2.0, 2.0]];
    let spec = MatrixGameSpec::new(cd_labels(2), payoffs)?;
    let name = if canonical { "stag_hunt_canonical" } else { "stag_hunt" };
    let game = MatrixGame::new(name, spec)?;
    let space = ContractSpace::new(Arc::new(ActionFine::new(DEFECT, "defection_fine")), vec![(0.0, 4.0)], 2)?;
    Ok((game, space))
}
