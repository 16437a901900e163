mod common;

use common::discrete;
use contracting_core::envs::grid::{Avatar, Dir, STAY};
use contracting_core::envs::{
    make_cleanup, make_emergency_merge, make_harvest, make_pd, make_public_goods, make_stag_hunt, CleanupConfig,
    GridConfig, GridState, HarvestConfig, MatrixState, MergeConfig, PublicGoods,
};
use contracting_core::game::cartesian;
use contracting_core::{Action, Error, MarkovGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(game: &impl MarkovGame<State = MatrixState>) -> Vec<(Vec<usize>, Vec<f64>)> {
    let sets: Vec<Vec<usize>> = (0..game.num_agents()).map(|i| (0..game.action_space(i).num_choices()).collect()).collect();
    cartesian(&sets).into_iter().map(|p| (p.clone(), game.reward(&MatrixState::Start, &discrete(&p)))).collect()
}

#[test]
fn prisoners_dilemma_golden_table() {
    let (g, _) = make_pd(2).unwrap();
    let expected = vec![
        (vec![0, 0], vec![-1.0, -1.0]),
        (vec![0, 1], vec![-3.0, 0.0]),
        (vec![1, 0], vec![0.0, -3.0]),
        (vec![1, 1], vec![-2.0, -2.0]),
    ];
    assert_eq!(table(&g), expected);
    assert_eq!(g.action_space(0).labels(), ["C", "D"]);
}

#[test]
fn n_agent_pd_scheme() {
    for n in 3..=5 {
        let (g, _) = make_pd(n).unwrap();
        let nf = n as f64;
        for (p, r) in table(&g) {
            let defectors = p.iter().filter(|&&a| a == 1).count();
            for (i, &a) in p.iter().enumerate() {
                let want = match (defectors, a) {
                    (0, _) => nf,
                    (d, _) if d == n => 1.0,
                    (_, 0) => 0.0,
                    _ => nf + 1.0,
                };
                assert_eq!(r[i], want, "profile {p:?}");
            }
        }
    }
    assert!(matches!(make_pd(1), Err(Error::InvalidParameter(_))));
}

#[test]
fn stag_hunt_golden_tables() {
    let (printed, _) = make_stag_hunt(false).unwrap();
    let rows: Vec<Vec<f64>> = table(&printed).into_iter().map(|(_, r)| r).collect();
    assert_eq!(rows, vec![vec![4.0, 4.0], vec![3.0, 1.0], vec![1.0, 3.0], vec![2.0, 2.0]]);
    let (canonical, _) = make_stag_hunt(true).unwrap();
    let rows: Vec<Vec<f64>> = table(&canonical).into_iter().map(|(_, r)| r).collect();
    assert_eq!(rows, vec![vec![4.0, 4.0], vec![1.0, 3.0], vec![3.0, 1.0], vec![2.0, 2.0]]);
}

#[test]
fn public_goods_examples() {
    let r = PublicGoods::payoffs(2, &[1.0, 0.0]);
    assert!((r[0] + 0.4).abs() < 1e-12 && (r[1] - 0.6).abs() < 1e-12);
    let (_, space) = make_public_goods(2).unwrap();
    let c = space.contract(&[1.0]).unwrap();
    let d = c.transfer_delta(&0, &[Action::scalar(1.0), Action::scalar(0.0)]);
    assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] + 0.5).abs() < 1e-12);
    let g = PublicGoods::new(3).unwrap();
    assert_eq!(g.horizon(), 100);
    assert!((g.reward_bound() - 0.8).abs() < 1e-12);
}

#[test]
fn public_goods_optimum_and_best_response() {
    let levels: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in 2..=4 {
        let full = PublicGoods::payoffs(n, &vec![1.0; n]);
        assert!((full.iter().sum::<f64>() - 0.2 * n as f64).abs() < 1e-12);
        for _ in 0..200 {
            let a: Vec<f64> = (0..n).map(|_| levels[rng.random_range(0..levels.len())]).collect();
            assert!(PublicGoods::payoffs(n, &a).iter().sum::<f64>() <= 0.2 * n as f64 + 1e-12);
            for i in 0..n {
                let best = levels
                    .iter()
                    .map(|&x| {
                        let mut b = a.clone();
                        b[i] = x;
                        (x, PublicGoods::payoffs(n, &b)[i])
                    })
                    .fold((f64::NAN, f64::NEG_INFINITY), |m, (x, v)| if v > m.1 + 1e-12 { (x, v) } else { m });
                assert_eq!(best.0, 0.0);
            }
        }
    }
}

/// Full investment becomes a dominant action once the shortfall tax reaches
/// `(1 - 1.2 / N) / (1 - 1 / N)`.
#[test]
fn shortfall_tax_threshold() {
    for n in 2..=4 {
        let (_, space) = make_public_goods(n).unwrap();
        let threshold = (1.0 - 1.2 / n as f64) / (1.0 - 1.0 / n as f64);
        for k in 0..=12 {
            let theta = k as f64 / 10.0;
            let c = space.contract(&[theta]).unwrap();
            let payoff = |a: &[f64], i: usize| {
                let acts: Vec<Action> = a.iter().map(|&x| Action::scalar(x)).collect();
                PublicGoods::payoffs(n, a)[i] + c.transfer_delta(&0, &acts)[i]
            };
            let mut others = vec![0.5; n];
            others[0] = 1.0;
            let invest = payoff(&others, 0);
            others[0] = 0.0;
            let shirk = payoff(&others, 0);
            assert_eq!(invest >= shirk - 1e-12, theta >= threshold - 1e-12, "n={n} theta={theta}");
        }
    }
}

#[test]
fn merge_idle_and_speed_ratio() {
    let (g, space) = make_emergency_merge(3, MergeConfig::default()).unwrap();
    assert_eq!(g.horizon(), 200);
    assert_eq!(g.vmax(0) / g.vmax(1), 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s0 = g.initial_state(&mut rng);
    assert_eq!(s0.pos[0], 0.0);
    assert!(s0.pos[1..].iter().all(|&x| x > 0.0 && x <= 5.0));
    let idle = vec![Action::scalar(0.0); 3];
    let mut s = s0.clone();
    let mut total = vec![0.0; 3];
    let mut steps = 0;
    while !g.is_terminal(&s) {
        for (t, r) in total.iter_mut().zip(g.reward(&s, &idle)) {
            *t += r;
        }
        s = g.transition(&s, &idle, &mut rng);
        steps += 1;
        assert_eq!(s.pos, s0.pos);
    }
    assert_eq!(steps, 200);
    assert_eq!(total, vec![-20000.0, -200.0, -200.0]);
    let zero = space.contract(&[0.0]).unwrap();
    let mut s = g.initial_state(&mut rng);
    for _ in 0..200 {
        let a: Vec<Action> = (0..3).map(|_| Action::scalar(rng.random_range(-0.1..=0.1))).collect();
        assert_eq!(zero.transfer_delta(&s, &a), vec![0.0; 3]);
        s = g.transition(&s, &a, &mut rng);
    }
    assert!(matches!(make_emergency_merge(1, MergeConfig::default()), Err(Error::InvalidParameter(_))));
}

fn random_moves(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Action> {
    (0..n).map(|_| Action::discrete(rng.random_range(0..k))).collect()
}

fn assert_no_shared_cells(s: &GridState) {
    for (i, a) in s.avatars.iter().enumerate() {
        for b in &s.avatars[i + 1..] {
            assert!((a.x, a.y) != (b.x, b.y), "two agents on ({}, {})", a.x, a.y);
        }
    }
}

#[test]
fn harvest_apple_conservation() {
    let (g, _) = make_harvest(4, HarvestConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = g.initial_state(&mut rng);
    for _ in 0..2000 {
        let a = random_moves(&mut rng, 4, 7);
        let eaten: f64 = g.reward(&s, &a).iter().sum();
        let next = g.transition(&s, &a, &mut rng);
        let spawned = s
            .apples
            .iter()
            .zip(&next.apples)
            .filter(|(before, after)| !**before && **after)
            .count();
        assert_eq!(next.apple_count() as f64, s.apple_count() as f64 - eaten + spawned as f64);
        assert!(next.apples.iter().zip(g.orchard()).all(|(a, o)| !a || *o));
        assert_no_shared_cells(&next);
        s = next;
    }
}

#[test]
fn cleanup_conservation_and_null_cleaning() {
    let (g, space) = make_cleanup(3, CleanupConfig::default()).unwrap();
    let null = space.null_contract();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut s = g.initial_state(&mut rng);
    for _ in 0..2000 {
        let a = random_moves(&mut rng, 3, 8);
        let (_, cleaned, eaten) = g.resolve(&s, &a);
        let r = g.reward(&s, &a);
        for i in 0..3 {
            assert_eq!(r[i], if eaten[i].is_some() { 1.0 } else { 0.0 });
        }
        assert_eq!(null.transfer_delta(&s, &a), vec![0.0; 3]);
        let next = g.transition(&s, &a, &mut rng);
        let gained = s.apples.iter().zip(&next.apples).filter(|(b, a)| !**b && **a).count();
        let eaten_count = eaten.iter().flatten().count();
        assert_eq!(next.apple_count(), s.apple_count() - eaten_count + gained);
        let spawned_waste = s.waste.iter().zip(&next.waste).filter(|(b, a)| !**b && **a).count();
        assert!(spawned_waste <= 1);
        let removed = s.waste.iter().zip(&next.waste).filter(|(b, a)| **b && !**a).count();
        assert!(removed <= cleaned.iter().flatten().count());
        assert_no_shared_cells(&next);
        s = next;
    }
}

#[test]
fn cleaning_bounty_example() {
    let (g, space) = make_cleanup(2, CleanupConfig::default()).unwrap();
    let mut s = g.initial_state(&mut ChaCha8Rng::seed_from_u64(0));
    let w = s.waste.iter().position(|&w| w).unwrap();
    let (x, y) = g.config().grid.coords(w);
    s.avatars[0] = Avatar { x, y, dir: Dir::West };
    let a = vec![Action::discrete(contracting_core::envs::cleanup::CLEAN), Action::discrete(STAY)];
    let c = space.contract(&[0.2]).unwrap();
    let d = c.transfer_delta(&s, &a);
    assert!((d[0] - 0.2).abs() < 1e-12 && (d[1] + 0.2).abs() < 1e-12);
    assert_eq!(g.reward(&s, &a), vec![0.0, 0.0]);
}

#[test]
fn grid_validation() {
    let small = GridConfig::new(4, 9);
    assert!(small.is_err());
    let cfg = HarvestConfig { grid: GridConfig { width: 3, height: 20 }, ..HarvestConfig::default() };
    assert!(matches!(make_harvest(2, cfg), Err(Error::InvalidParameter(_))));
    let cfg = CleanupConfig { grid: GridConfig { width: 18, height: 4 }, ..CleanupConfig::default() };
    assert!(matches!(make_cleanup(2, cfg), Err(Error::InvalidParameter(_))));
    assert!(make_harvest(1, HarvestConfig::default()).is_err());
    assert!(make_cleanup(1, CleanupConfig::default()).is_err());
}

/// Sample `steps` random transitions, restarting at terminal states, and
/// return the largest absolute reward seen.
fn max_abs_reward<G: MarkovGame>(game: &G, steps: usize, act: impl Fn(&mut ChaCha8Rng, usize) -> Action) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut s = game.initial_state(&mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        if game.is_terminal(&s) {
            s = game.initial_state(&mut rng);
        }
        let a: Vec<Action> = (0..game.num_agents()).map(|i| act(&mut rng, i)).collect();
        let r = game.reward(&s, &a);
        assert_eq!(r.len(), game.num_agents());
        worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
        s = game.transition(&s, &a, &mut rng);
    }
    worst
}

const SAMPLED_STEPS: usize = 1_000_000;

#[test]
fn rewards_within_declared_bound() {
    let discrete2 = |rng: &mut ChaCha8Rng, _| Action::discrete(rng.random_range(0..2));
    for n in [2, 4] {
        let (g, _) = make_pd(n).unwrap();
        assert!(max_abs_reward(&g, SAMPLED_STEPS, discrete2) <= g.reward_bound());
    }
    let (g, _) = make_stag_hunt(false).unwrap();
    assert!(max_abs_reward(&g, SAMPLED_STEPS, discrete2) <= g.reward_bound());
    let (g, _) = make_public_goods(3).unwrap();
    assert!(max_abs_reward(&g, SAMPLED_STEPS, |rng, _| Action::scalar(rng.random_range(0.0..=1.0))) <= g.reward_bound() + 1e-12);
    let (g, _) = make_emergency_merge(3, MergeConfig::default()).unwrap();
    assert!(max_abs_reward(&g, SAMPLED_STEPS, |rng, _| Action::scalar(rng.random_range(-0.1..=0.1))) <= g.reward_bound());
    let (g, _) = make_harvest(2, HarvestConfig::default()).unwrap();
    assert!(max_abs_reward(&g, SAMPLED_STEPS, |rng, _| Action::discrete(rng.random_range(0..7))) <= g.reward_bound());
    let (g, _) = make_cleanup(2, CleanupConfig::default()).unwrap();
    assert!(max_abs_reward(&g, SAMPLED_STEPS, |rng, _| Action::discrete(rng.random_range(0..8))) <= g.reward_bound());
}
