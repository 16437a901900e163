use contracting_core::augment::{proposal, vote};
use contracting_core::envs::{make_pd, make_public_goods, MatrixState};
use contracting_core::equilibrium::{solve_contract_spe, StageGame};
use contracting_core::{augment_single_proposer, Action, AugmentedState, Error, MarkovGame, SeedStream, Lane};
use contracting_learn::policy::{ActionPart, Head, Policy, Sample};
use contracting_learn::ppo::surrogate_loss;
use contracting_learn::train::{negotiation_train_stage2, stage_budgets, subgame_train_stage1};
use contracting_learn::*;
use rand_chacha::ChaCha8Rng;

fn small_hp() -> Hyperparams {
    Hyperparams {
        batch_size: 500,
        minibatch_size: 128,
        sgd_iters: 3,
        hidden: vec![8, 8],
        joint_hidden: vec![16],
        stage2_episodes: 16,
        stage2_minibatch: 16,
        ..Hyperparams::default()
    }
}

fn loss_at(policy: &Policy, params: &[f64], obs: &[Vec<f64>], samples: &[Sample], adv: &[f64]) -> f64 {
    let mut p = policy.clone();
    let n = p.net.num_params();
    p.net.params.copy_from_slice(&params[..n]);
    p.log_std.copy_from_slice(&params[n..]);
    surrogate_loss(&p, obs, samples, adv, 0.3, 0.2, 0.01).0
}

fn gradient_check(head: Head, obs: Vec<Vec<f64>>) {
    let mut rng: ChaCha8Rng = SeedStream::new(11).rng(0, Lane::Aux(0));
    let policy = Policy::new(obs[0].len(), &[5], head, &mut rng);
    let mut obs_all = Vec::new();
    let mut samples = Vec::new();
    for k in 0..12 {
        let o = obs[k % obs.len()].clone();
        let mut s = policy.sample(&o, &mut rng);
        // Old log-probabilities slightly off so ratios differ from 1 but stay inside the clip range.
        s.logp -= 0.05 * ((k % 3) as f64 - 1.0);
        samples.push(s);
        obs_all.push(o);
    }
    let adv: Vec<f64> = (0..12).map(|k| (k as f64 - 5.5) / 3.0).collect();
    let (_, grad, _, _) = surrogate_loss(&policy, &obs_all, &samples, &adv, 0.3, 0.2, 0.01);
    let mut params = policy.net.params.clone();
    params.extend_from_slice(&policy.log_std);
    assert_eq!(grad.len(), params.len());
    let h = 1e-6;
    for j in 0..params.len() {
        let mut up = params.clone();
        let mut down = params.clone();
        up[j] += h;
        down[j] -= h;
        let numeric = (loss_at(&policy, &up, &obs_all, &samples, &adv) - loss_at(&policy, &down, &obs_all, &samples, &adv)) / (2.0 * h);
        let scale = grad[j].abs().max(numeric.abs());
        if scale > 1e-5 {
            let rel = (grad[j] - numeric).abs() / scale;
            assert!(rel < 1e-4, "param {j}: analytic {} numeric {numeric} rel {rel}", grad[j]);
        } else {
            assert!((grad[j] - numeric).abs() < 1e-9, "param {j}: analytic {} numeric {numeric}", grad[j]);
        }
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences_two_states_two_actions() {
    let head = Head::new(vec![ActionPart { choices: 2, low: vec![], high: vec![] }]);
    gradient_check(head, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn surrogate_gradient_matches_finite_differences_with_gaussian_dims() {
    let head = Head::new(vec![
        ActionPart { choices: 3, low: vec![0.0, -1.0], high: vec![2.0, 1.0] },
        ActionPart { choices: 0, low: vec![0.0], high: vec![4.0] },
    ]);
    gradient_check(head, vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.0, -0.5]]);
}

#[test]
fn zero_budget_gives_empty_series() {
    let (g, space) = make_pd(2).unwrap();
    let hp = small_hp();
    for report in [
        train_separate(&g, &hp, 0, 1).unwrap(),
        train_joint(&g, &hp, 0, 1).unwrap(),
        train_gifting(&g, 2.0, &hp, 0, 1).unwrap(),
        train_contracting(&g, &space, &hp, 0, 1).unwrap(),
    ] {
        assert!(report.iterations.is_empty());
        assert_eq!(report.env_steps, 0);
        assert_eq!(report.final_eval.episodes, train::EVAL_EPISODES);
    }
}

#[test]
fn separate_steps_are_counted_exactly() {
    let (g, _) = make_public_goods(2).unwrap();
    let hp = small_hp();
    let r = train_separate(&g, &hp, 1234, 0).unwrap();
    assert_eq!(r.env_steps, 1234);
    let steps: Vec<u64> = r.iterations.iter().map(|i| i.env_steps).collect();
    assert_eq!(steps, vec![500, 1000, 1234]);
}

#[test]
fn stage_budget_split() {
    assert_eq!(stage_budgets(0), (0, 0));
    assert_eq!(stage_budgets(11_000), (10_000, 1_000));
    for b in [1u64, 7, 100, 12_345, 200_000, 1_000_000] {
        let (s1, s2) = stage_budgets(b);
        assert!(s1 + s2 <= b);
        assert!(s2 * 10 <= s1, "{b}: {s1} {s2}");
        assert!(b - s1 - s2 <= 1, "{b}: {s1} {s2}");
    }
}

#[test]
fn contracting_steps_are_counted_exactly() {
    let (g, space) = make_public_goods(2).unwrap();
    let hp = small_hp();
    let r = train_contracting(&g, &space, &hp, 2_200, 3).unwrap();
    let (s1, s2) = stage_budgets(2_200);
    assert_eq!(r.env_steps, s1 + s2);
    let stage1_end = r.iterations.iter().filter(|i| i.stage == 1).map(|i| i.env_steps).max().unwrap();
    assert_eq!(stage1_end, s1);
    assert_eq!(r.iterations.last().unwrap().env_steps, s1 + s2);
    assert!(r.iterations.iter().filter(|i| i.stage == 2).all(|i| i.acceptance_rate.is_some() && i.contract_params.is_some()));
}

#[test]
fn identical_seeds_give_identical_reports() {
    let (g, space) = make_pd(2).unwrap();
    let hp = small_hp();
    assert_eq!(train_separate(&g, &hp, 1500, 9).unwrap(), train_separate(&g, &hp, 1500, 9).unwrap());
    assert_eq!(train_joint(&g, &hp, 1500, 9).unwrap(), train_joint(&g, &hp, 1500, 9).unwrap());
    let a = train_contracting(&g, &space, &hp, 2200, 9).unwrap();
    assert_eq!(a, train_contracting(&g, &space, &hp, 2200, 9).unwrap());
    assert_ne!(a.snapshot, train_contracting(&g, &space, &hp, 2200, 10).unwrap().snapshot);
}

#[test]
fn zero_gift_bound_reproduces_separate_training() {
    let (g, _) = make_pd(2).unwrap();
    let hp = small_hp();
    let sep = train_separate(&g, &hp, 2000, 4).unwrap();
    let gift = train_gifting(&g, 0.0, &hp, 2000, 4).unwrap();
    assert_eq!(gift.algorithm, Algorithm::Gifting);
    assert_eq!(gift.iterations, sep.iterations);
    assert_eq!(gift.final_eval, sep.final_eval);
}

#[test]
fn gifting_rejects_negative_bounds() {
    let (g, _) = make_pd(2).unwrap();
    assert!(train_gifting(&g, -1.0, &small_hp(), 10, 0).is_err());
}

#[test]
fn joint_control_refuses_large_action_spaces() {
    let (g, _) = make_pd(8).unwrap();
    match train_joint(&g, &small_hp(), 10, 0) {
        Err(LearnError::Game(Error::UnsupportedScale(_))) => {}
        other => panic!("expected unsupported scale, got {other:?}"),
    }
}

#[test]
fn stage_one_conditions_on_the_contract() {
    let (g, space) = make_pd(2).unwrap();
    let s1 = subgame_train_stage1(&g, &space, &small_hp(), 600, 0).unwrap();
    assert!(s1.profile.is_frozen());
    assert_eq!(s1.env_steps, 600);
    for p in &s1.profile.policies {
        assert_eq!(p.net.input_dim(), g.observation_dim() + space.dim());
    }
}

#[test]
fn negotiation_needs_a_frozen_profile() {
    let (g, space) = make_pd(2).unwrap();
    let s1 = subgame_train_stage1(&g, &space, &small_hp(), 100, 0).unwrap();
    let thawed = PlayProfile::new(s1.profile.policies.clone(), s1.profile.bounds.clone());
    match negotiation_train_stage2(&g, &space, &thawed, &small_hp(), 100, 0) {
        Err(LearnError::Game(Error::ContractViolation(_))) => {}
        other => panic!("expected contract violation, got {other:?}"),
    }
    assert!(negotiation_train_stage2(&g, &space, &s1.profile, &small_hp(), 100, 0).is_ok());
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let (g, _) = make_pd(2).unwrap();
    let hp = Hyperparams { lr: -1.0, ..Hyperparams::default() };
    assert!(matches!(train_separate(&g, &hp, 10, 0), Err(LearnError::Config(_))));
}

#[test]
fn scripted_solver_profile_evaluates_to_solver_welfare() {
    let (g, space) = make_pd(2).unwrap();
    let stage = StageGame::from_matrix(&g).unwrap();
    let sol = solve_contract_spe(&stage, &space, 0.25).unwrap();
    let aug = augment_single_proposer(g, space);
    let params = sol.params.clone().unwrap();
    let profile = sol.profile.clone();
    let agent = |i: usize| {
        let (params, profile) = (params.clone(), profile.clone());
        move |s: &AugmentedState<MatrixState>, _: &mut ChaCha8Rng| match s {
            AugmentedState::Propose { .. } => proposal(params.clone()),
            AugmentedState::AwaitAcceptance { .. } => vote(true),
            AugmentedState::Play { .. } => Action::discrete(profile[i]),
        }
    };
    let (a0, a1) = (agent(0), agent(1));
    let report = evaluate_policies(&[&a0, &a1], &aug, 10, 0).unwrap();
    assert_eq!(report.mean_social, sol.welfare);
    assert_eq!(report.mean_rewards, sol.values);
}

#[test]
fn reports_survive_a_json_round_trip() {
    let (g, space) = make_pd(2).unwrap();
    let r = train_contracting(&g, &space, &small_hp(), 1100, 2).unwrap();
    let back: TrainReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}
