//! Emergency merge: cars and an ambulance approach a lane merge.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{ContractSpace, TransferRule};
use crate::error::{Error, Result};
use crate::game::{Action, ActionSpace, MarkovGame};

pub const AMBULANCE: usize = 0;
pub const MAX_SUBSIDY: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub road_length: f64,
    pub merge_point: f64,
    /// Vehicles start spread over `[0, start_span]`.
    pub start_span: f64,
    pub ambulance_vmax: f64,
    pub car_vmax: f64,
    pub max_accel: f64,
    pub gap: f64,
    pub horizon: usize,
    pub ambulance_penalty: f64,
    pub car_penalty: f64,
    pub discount: f64,
    /// Whether cars that already finished pay the subsidy from their finish position.
    pub charge_finished_cars: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            road_length: 20.0,
            merge_point: 6.0,
            start_span: 5.0,
            ambulance_vmax: 1.0,
            car_vmax: 0.25,
            max_accel: 0.1,
            gap: 0.5,
            horizon: 200,
            ambulance_penalty: 100.0,
            car_penalty: 1.0,
            discount: 0.99,
            charge_finished_cars: true,
        }
    }
}

impl MergeConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.road_length > self.merge_point
            && self.merge_point > self.start_span
            && self.start_span > 0.0
            && self.ambulance_vmax > 0.0
            && self.car_vmax > 0.0
            && self.max_accel > 0.0
            && self.gap > 0.0
            && self.horizon > 0
            && self.discount > 0.0
            && self.discount < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent merge geometry: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoadLane {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeState {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub lane: Vec<RoadLane>,
    pub done: Vec<bool>,
    pub t: usize,
}

impl MergeState {
    pub fn is_merged(&self, i: usize, cfg: &MergeConfig) -> bool {
        self.pos[i] >= cfg.merge_point
    }
}

#[derive(Clone, Debug)]
pub struct EmergencyMerge {
    n: usize,
    cfg: MergeConfig,
    space: ActionSpace,
}

impl EmergencyMerge {
    pub fn new(n: usize, cfg: MergeConfig) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("merge needs an ambulance and at least one car, got N={n}")));
        }
        cfg.validate()?;
        let space = ActionSpace::continuous(-cfg.max_accel, cfg.max_accel)?;
        Ok(Self { n, cfg, space })
    }

    pub fn config(&self) -> &MergeConfig {
        &self.cfg
    }

    pub fn vmax(&self, i: usize) -> f64 {
        vmax(&self.cfg, i)
    }

    /// Deterministic vehicle dynamics.
    pub fn advance(&self, state: &MergeState, actions: &[Action]) -> MergeState {
        advance(&self.cfg, state, actions)
    }
}

fn vmax(cfg: &MergeConfig, i: usize) -> f64 {
    if i == AMBULANCE {
        cfg.ambulance_vmax
    } else {
        cfg.car_vmax
    }
}

fn advance(cfg: &MergeConfig, state: &MergeState, actions: &[Action]) -> MergeState {
    let n = state.pos.len();
    let mut next = state.clone();
    next.t += 1;
    let mut order: Vec<usize> = (0..n).filter(|&i| !state.done[i]).collect();
    order.sort_by(|&a, &b| state.pos[b].total_cmp(&state.pos[a]).then(a.cmp(&b)));
    let mut placed: Vec<usize> = Vec::with_capacity(n);
    for &i in &order {
        let a = actions[i].value(0).clamp(-cfg.max_accel, cfg.max_accel);
        let v = (state.vel[i] + a).clamp(0.0, vmax(cfg, i));
        let x0 = state.pos[i];
        let mut x = x0 + v;
        for &j in &placed {
            if next.done[j] {
                continue;
            }
            let xj = next.pos[j];
            let conflict = state.lane[j] == state.lane[i] || (xj >= cfg.merge_point && x >= cfg.merge_point);
            if conflict {
                x = x.min(xj - cfg.gap);
            }
        }
        let x = x.max(x0);
        next.pos[i] = x;
        next.vel[i] = x - x0;
        next.done[i] = x >= cfg.road_length;
        placed.push(i);
    }
    next
}

impl MarkovGame for EmergencyMerge {
    type State = MergeState;

    fn num_agents(&self) -> usize {
        self.n
    }

    fn action_space(&self, _agent: usize) -> &ActionSpace {
        &self.space
    }

    /// Ambulance at 0 in lane B; cars spread up to `start_span`, the front
    /// one in lane A and lanes alternating backwards.
    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> MergeState {
        let cars = self.n - 1;
        let mut pos = vec![0.0; self.n];
        let mut lane = vec![RoadLane::B; self.n];
        for k in 0..cars {
            // k = 0 is the front car.
            pos[k + 1] = self.cfg.start_span * (cars - k) as f64 / cars as f64;
            lane[k + 1] = if k % 2 == 0 { RoadLane::A } else { RoadLane::B };
        }
        MergeState { pos, vel: vec![0.0; self.n], lane, done: vec![false; self.n], t: 0 }
    }

    fn transition(&self, state: &MergeState, actions: &[Action], _rng: &mut ChaCha8Rng) -> MergeState {
        self.advance(state, actions)
    }

    fn reward(&self, state: &MergeState, _actions: &[Action]) -> Vec<f64> {
        (0..self.n)
            .map(|i| match (state.done[i], i == AMBULANCE) {
                (true, _) => 0.0,
                (false, true) => -self.cfg.ambulance_penalty,
                (false, false) => -self.cfg.car_penalty,
            })
            .collect()
    }

    fn is_terminal(&self, state: &MergeState) -> bool {
        state.t >= self.cfg.horizon || state.done.iter().all(|&d| d)
    }

    fn discount(&self) -> f64 {
        self.cfg.discount
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reward_bound(&self) -> f64 {
        self.cfg.ambulance_penalty.max(self.cfg.car_penalty)
    }

    /// Own kinematics, then every other vehicle relative to this one.
    fn observe(&self, state: &MergeState, agent: usize) -> Vec<f64> {
        let c = &self.cfg;
        let lane = |i: usize| f64::from(state.lane[i] == RoadLane::B);
        let mut obs = vec![
            state.pos[agent] / c.road_length,
            state.vel[agent] / self.vmax(agent),
            lane(agent),
            f64::from(agent == AMBULANCE),
            f64::from(state.done[agent]),
            f64::from(state.is_merged(agent, c)),
            state.t as f64 / c.horizon as f64,
        ];
        for j in (0..self.n).filter(|&j| j != agent) {
            obs.extend([
                (state.pos[j] - state.pos[agent]) / c.road_length,
                state.vel[j] / c.ambulance_vmax,
                lane(j),
                f64::from(state.done[j]),
            ]);
        }
        obs
    }

    fn observation_dim(&self) -> usize {
        7 + 4 * (self.n - 1)
    }
}

/// Subsidy settled when the ambulance crosses the merge point: each car
/// behind it by `d` receives `theta * d` from the ambulance, each car ahead
/// by `d` pays `theta * d`.
#[derive(Clone, Debug)]
pub struct MergeSubsidy {
    cfg: MergeConfig,
}

impl TransferRule<MergeState> for MergeSubsidy {
    fn family_id(&self) -> &str {
        "merge_subsidy"
    }

    fn transfers(&self, params: &[f64], state: &MergeState, actions: &[Action]) -> Vec<f64> {
        let n = state.pos.len();
        let mut out = vec![0.0; n];
        if state.done[AMBULANCE] || state.pos[AMBULANCE] >= self.cfg.merge_point {
            return out;
        }
        let next = advance(&self.cfg, state, actions);
        let xa = next.pos[AMBULANCE];
        if xa < self.cfg.merge_point {
            return out;
        }
        for car in 1..n {
            if state.done[car] && !self.cfg.charge_finished_cars {
                continue;
            }
            // Positive when the car is behind the ambulance.
            let amount = params[0] * (xa - next.pos[car]);
            out[car] += amount;
            out[AMBULANCE] -= amount;
        }
        out
    }
}

pub fn make_emergency_merge(n: usize, cfg: MergeConfig) -> Result<(EmergencyMerge, ContractSpace<MergeState>)> {
    let game = EmergencyMerge::new(n, cfg.clone())?;
    let space = ContractSpace::new(Arc::new(MergeSubsidy { cfg }), vec![(0.0, MAX_SUBSIDY)], n)?;
    Ok((game, space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn accel(values: &[f64]) -> Vec<Action> {
        values.iter().map(|&v| Action::scalar(v)).collect()
    }

    fn run(game: &EmergencyMerge, policy: impl Fn(&MergeState) -> Vec<Action>) -> (MergeState, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = game.initial_state(&mut rng);
        let mut total = vec![0.0; game.num_agents()];
        while !game.is_terminal(&s) {
            let a = policy(&s);
            for (t, r) in total.iter_mut().zip(game.reward(&s, &a)) {
                *t += r;
            }
            s = game.advance(&s, &a);
        }
        (s, total)
    }

    #[test]
    fn idle_vehicles_accrue_penalties() {
        let (g, _) = make_emergency_merge(2, MergeConfig::default()).unwrap();
        let (s, total) = run(&g, |_| accel(&[0.0, 0.0]));
        assert_eq!(s.t, 200);
        assert_eq!(s.pos, g.initial_state(&mut ChaCha8Rng::seed_from_u64(0)).pos);
        assert_eq!(total, vec![-20000.0, -200.0]);
    }

    #[test]
    fn racing_car_blocks_the_ambulance() {
        let (g, _) = make_emergency_merge(2, MergeConfig::default()).unwrap();
        let (_, race) = run(&g, |_| accel(&[0.1, 0.1]));
        let (_, wait) = run(&g, |s| accel(&[0.1, if s.done[0] || s.pos[0] >= 6.0 { 0.1 } else { -0.1 }]));
        // The car prefers racing; everyone together prefers waiting.
        assert!(race[1] > wait[1]);
        assert!(race.iter().sum::<f64>() < wait.iter().sum::<f64>() - 1000.0);
    }

    #[test]
    fn no_overlap_after_merge() {
        let (g, _) = make_emergency_merge(4, MergeConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = g.initial_state(&mut rng);
        for _ in 0..200 {
            s = g.advance(&s, &accel(&[0.1; 4]));
            let merged: Vec<f64> = (0..4).filter(|&i| !s.done[i] && s.is_merged(i, g.config())).map(|i| s.pos[i]).collect();
            for (a, x) in merged.iter().enumerate() {
                for y in &merged[a + 1..] {
                    assert!((x - y).abs() >= 0.5 - 1e-9);
                }
            }
            for i in 0..4 {
                assert!(s.vel[i] >= 0.0 && s.vel[i] <= g.vmax(i) + 1e-12);
            }
        }
    }

    #[test]
    fn subsidy_paid_at_crossing_only() {
        let (g, space) = make_emergency_merge(2, MergeConfig::default()).unwrap();
        let c = space.contract(&[2.0]).unwrap();
        let s = MergeState {
            pos: vec![5.5, 4.0],
            vel: vec![0.9, 0.0],
            lane: vec![RoadLane::B, RoadLane::A],
            done: vec![false, false],
            t: 10,
        };
        let a = accel(&[0.1, 0.0]);
        let d = c.transfer_delta(&s, &a);
        let next = g.advance(&s, &a);
        assert!((d[1] - 2.0 * (next.pos[0] - 4.0)).abs() < 1e-12);
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(c.transfer_delta(&next, &a), vec![0.0, 0.0]);
        let zero = space.contract(&[0.0]).unwrap();
        assert_eq!(zero.transfer_delta(&s, &a), vec![0.0, 0.0]);
    }
}
