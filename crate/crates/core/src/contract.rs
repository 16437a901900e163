//! Zero-sum reward-transfer contracts and contract spaces.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::Action;

/// Zero-sum tolerance used when validating transfers.
pub const ZERO_SUM_TOL: f64 = 1e-9;

/// The state/action-dependent part of a contract family.
///
/// `transfers` must return a vector summing to zero.
pub trait TransferRule<S>: Send + Sync {
    fn family_id(&self) -> &str;

    fn transfers(&self, params: &[f64], state: &S, actions: &[Action]) -> Vec<f64>;
}

/// A contract: a transfer rule with fixed parameters plus a one-off signing transfer.
#[derive(Clone)]
pub struct Contract<S> {
    rule: Option<Arc<dyn TransferRule<S>>>,
    family_id: String,
    params: Vec<f64>,
    signing: Vec<f64>,
}

impl<S> Contract<S> {
    /// The null contract: no transfers, ever.
    pub fn null(num_agents: usize) -> Self {
        Self { rule: None, family_id: "null".into(), params: Vec::new(), signing: vec![0.0; num_agents] }
    }

    pub fn new(rule: Arc<dyn TransferRule<S>>, params: Vec<f64>, signing: Vec<f64>) -> Result<Self> {
        let total: f64 = signing.iter().sum();
        if total.abs() > ZERO_SUM_TOL * (1.0 + signing.iter().map(|v| v.abs()).sum::<f64>()) {
            return Err(Error::InvalidParameter(format!("signing transfers sum to {total}, not 0")));
        }
        Ok(Self { family_id: rule.family_id().to_string(), rule: Some(rule), params, signing })
    }

    pub fn is_null(&self) -> bool {
        self.rule.is_none()
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    /// Parameters of the transfer rule (excluding the signing parameter).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_agents(&self) -> usize {
        self.signing.len()
    }

    /// Per-agent reward change at `(state, actions)`.
    pub fn transfer_delta(&self, state: &S, actions: &[Action]) -> Vec<f64> {
        match &self.rule {
            None => vec![0.0; self.signing.len()],
            Some(rule) => rule.transfers(&self.params, state, actions),
        }
    }

    /// Paid once, when the contract is accepted.
    pub fn signing_delta(&self) -> &[f64] {
        &self.signing
    }
}

impl<S> PartialEq for Contract<S> {
    fn eq(&self, other: &Self) -> bool {
        self.family_id == other.family_id && self.params == other.params && self.signing == other.signing
    }
}

impl<S> fmt::Debug for Contract<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contract")
            .field("family", &self.family_id)
            .field("params", &self.params)
            .field("signing", &self.signing)
            .finish()
    }
}

/// Split `amount` paid by `payer` evenly among everyone else.
pub fn pay_to_others(out: &mut [f64], payer: usize, amount: f64) {
    let n = out.len();
    if n < 2 || amount == 0.0 {
        return;
    }
    out[payer] -= amount;
    let share = amount / (n - 1) as f64;
    for (j, o) in out.iter_mut().enumerate() {
        if j != payer {
            *o += share;
        }
    }
}

/// Split `amount` paid by `payer` evenly among all agents, payer included.
pub fn pay_to_all(out: &mut [f64], payer: usize, amount: f64) {
    let n = out.len();
    if n == 0 || amount == 0.0 {
        return;
    }
    out[payer] -= amount;
    let share = amount / n as f64;
    for o in out.iter_mut() {
        *o += share;
    }
}

/// Fine on a given discrete action, proceeds split among the other agents.
#[derive(Clone, Debug)]
pub struct ActionFine {
    pub fined_action: usize,
    id: String,
}

impl ActionFine {
    pub fn new(fined_action: usize, id: impl Into<String>) -> Self {
        Self { fined_action, id: id.into() }
    }
}

impl<S> TransferRule<S> for ActionFine {
    fn family_id(&self) -> &str {
        &self.id
    }

    fn transfers(&self, params: &[f64], _state: &S, actions: &[Action]) -> Vec<f64> {
        let fine = params[0];
        let mut out = vec![0.0; actions.len()];
        for (i, a) in actions.iter().enumerate() {
            if a.choice == Some(self.fined_action) {
                pay_to_others(&mut out, i, fine);
            }
        }
        out
    }
}

/// A parametric family of contracts, always containing the null contract.
///
/// Parameter vectors are `[rule params..., signing?]`. With a signing
/// parameter `t`, every non-proposer pays `t` to the proposer at acceptance.
#[derive(Clone)]
pub struct ContractSpace<S> {
    rule: Option<Arc<dyn TransferRule<S>>>,
    bounds: Vec<(f64, f64)>,
    signing: Option<(f64, f64)>,
    num_agents: usize,
    proposer: usize,
}

impl<S> fmt::Debug for ContractSpace<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContractSpace")
            .field("family", &self.family_id())
            .field("bounds", &self.bounds)
            .field("signing", &self.signing)
            .field("proposer", &self.proposer)
            .finish()
    }
}

impl<S> ContractSpace<S> {
    pub fn new(rule: Arc<dyn TransferRule<S>>, bounds: Vec<(f64, f64)>, num_agents: usize) -> Result<Self> {
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("bad parameter interval [{lo}, {hi}]")));
            }
        }
        if num_agents < 2 {
            return Err(Error::InvalidParameter("contracts need at least two agents".into()));
        }
        Ok(Self { rule: Some(rule), bounds, signing: None, num_agents, proposer: 0 })
    }

    /// The degenerate space holding only the null contract.
    pub fn null_only(num_agents: usize) -> Self {
        Self { rule: None, bounds: Vec::new(), signing: None, num_agents, proposer: 0 }
    }

    pub fn with_signing(mut self, low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low <= high) {
            return Err(Error::InvalidParameter(format!("bad signing interval [{low}, {high}]")));
        }
        if self.rule.is_some() {
            self.signing = Some((low, high));
        }
        Ok(self)
    }

    pub fn without_signing(mut self) -> Self {
        self.signing = None;
        self
    }

    pub fn with_proposer(mut self, proposer: usize) -> Self {
        self.proposer = proposer;
        self
    }

    pub fn family_id(&self) -> &str {
        self.rule.as_ref().map_or("null", |r| r.family_id())
    }

    pub fn rule(&self) -> Option<&Arc<dyn TransferRule<S>>> {
        self.rule.as_ref()
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn proposer(&self) -> usize {
        self.proposer
    }

    pub fn has_signing(&self) -> bool {
        self.signing.is_some()
    }

    pub fn is_null_only(&self) -> bool {
        self.rule.is_none()
    }

    /// Length of a full parameter vector.
    pub fn dim(&self) -> usize {
        self.bounds.len() + usize::from(self.signing.is_some())
    }

    /// Bounds of the full parameter vector.
    pub fn param_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = self.bounds.clone();
        b.extend(self.signing);
        b
    }

    pub fn null_contract(&self) -> Contract<S> {
        Contract::null(self.num_agents)
    }

    pub fn contains_params(&self, params: &[f64]) -> bool {
        params.len() == self.dim()
            && params
                .iter()
                .zip(self.param_bounds())
                .all(|(p, (lo, hi))| *p >= lo - 1e-12 && *p <= hi + 1e-12)
    }

    /// Build the contract for a full parameter vector.
    pub fn contract(&self, params: &[f64]) -> Result<Contract<S>> {
        let Some(rule) = &self.rule else {
            return if params.is_empty() {
                Ok(self.null_contract())
            } else {
                Err(Error::InvalidParameter("null-only space takes no parameters".into()))
            };
        };
        if !self.contains_params(params) {
            return Err(Error::InvalidParameter(format!(
                "parameters {params:?} outside {:?}",
                self.param_bounds()
            )));
        }
        let (rule_params, signing) = match self.signing {
            Some(_) => {
                let t = params[params.len() - 1];
                let mut s = vec![-t; self.num_agents];
                s[self.proposer] = t * (self.num_agents - 1) as f64;
                (params[..params.len() - 1].to_vec(), s)
            }
            None => (params.to_vec(), vec![0.0; self.num_agents]),
        };
        Contract::new(rule.clone(), rule_params, signing)
    }

    /// Uniform draw from the parameter box.
    pub fn sample_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.param_bounds()
            .into_iter()
            .map(|(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Contract<S> {
        let params = self.sample_params(rng);
        self.contract(&params).expect("sampled parameters lie in the box")
    }

    /// Parameter grid with spacing `step`, both endpoints included, in
    /// lexicographic order.
    pub fn grid(&self, step: f64) -> Result<Vec<Vec<f64>>> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid step must be positive, got {step}")));
        }
        let axes: Vec<Vec<f64>> = self.param_bounds().into_iter().map(|(lo, hi)| axis(lo, hi, step)).collect();
        if self.rule.is_none() {
            return Ok(Vec::new());
        }
        Ok(crate::game::cartesian(&axes))
    }
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if hi - pts[pts.len() - 1] > 1e-9 {
        pts.push(hi);
    } else {
        let last = pts.len() - 1;
        pts[last] = hi;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd_fine(n: usize) -> ContractSpace<()> {
        ContractSpace::new(Arc::new(ActionFine::new(1, "fine")), vec![(0.0, n as f64)], n).unwrap()
    }

    #[test]
    fn fine_transfers_match_worked_example() {
        let c = pd_fine(2).contract(&[1.5]).unwrap();
        let d = c.transfer_delta(&(), &[Action::discrete(0), Action::discrete(1)]);
        assert_eq!(d, vec![1.5, -1.5]);
    }

    #[test]
    fn four_agent_fine_splits_evenly() {
        let c = pd_fine(4).contract(&[2.0]).unwrap();
        let acts: Vec<Action> = [0, 0, 1, 0].iter().map(|&a| Action::discrete(a)).collect();
        let d = c.transfer_delta(&(), &acts);
        assert!((d[2] + 2.0).abs() < 1e-12);
        for j in [0, 1, 3] {
            assert!((d[j] - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn null_contract_is_zero() {
        let c: Contract<()> = Contract::null(3);
        assert!(c.is_null());
        assert_eq!(c.transfer_delta(&(), &vec![Action::discrete(0); 3]), vec![0.0; 3]);
        assert_eq!(c.signing_delta(), &[0.0; 3]);
    }

    #[test]
    fn signing_parameter_pays_proposer() {
        let space = pd_fine(3).with_signing(-3.0, 3.0).unwrap();
        assert_eq!(space.dim(), 2);
        let c = space.contract(&[1.0, 1.5]).unwrap();
        assert_eq!(c.params(), &[1.0]);
        assert_eq!(c.signing_delta(), &[3.0, -1.5, -1.5]);
    }

    #[test]
    fn grid_covers_endpoints() {
        let g = pd_fine(2).grid(0.25).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0]);
        assert_eq!(g[8], vec![2.0]);
        let space = ContractSpace::<()>::new(Arc::new(ActionFine::new(1, "f")), vec![(0.0, 1.0)], 2).unwrap();
        let g = space.grid(0.3).unwrap();
        assert_eq!(g.last().unwrap(), &vec![1.0]);
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn out_of_box_parameters_rejected() {
        assert!(pd_fine(2).contract(&[2.5]).is_err());
        assert!(pd_fine(2).contract(&[]).is_err());
        assert!(ContractSpace::<()>::null_only(2).contract(&[]).unwrap().is_null());
    }

    #[test]
    fn unbalanced_signing_rejected() {
        let rule: Arc<dyn TransferRule<()>> = Arc::new(ActionFine::new(1, "f"));
        assert!(Contract::new(rule, vec![1.0], vec![1.0, 0.0]).is_err());
    }
}
