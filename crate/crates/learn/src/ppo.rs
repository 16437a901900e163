//! Clipped-surrogate PPO with an adaptive KL penalty and a separate value
//! network.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::nn::{stack, Mlp};
use crate::optim::{Optimizer, OptimizerKind};
use crate::policy::{entropy, kl, log_prob, Head, Policy, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub lr: f64,
    pub sgd_iters: usize,
    pub momentum: f64,
    pub optimizer: OptimizerKind,
    /// Environment steps per training iteration.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub clip: f64,
    pub kl_coeff: f64,
    pub kl_target: f64,
    pub vf_coeff: f64,
    pub entropy_coeff: f64,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    /// Hidden layers of the joint learner.
    pub joint_hidden: Vec<usize>,
    /// Negotiation episodes per iteration in the second contracting stage.
    pub stage2_episodes: usize,
    pub stage2_minibatch: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            sgd_iters: 30,
            momentum: 0.99,
            optimizer: OptimizerKind::Momentum,
            batch_size: 12_000,
            minibatch_size: 4092,
            clip: 0.3,
            kl_coeff: 0.2,
            kl_target: 0.01,
            vf_coeff: 1.0,
            entropy_coeff: 0.0,
            gamma: 0.99,
            hidden: vec![64, 64],
            joint_hidden: vec![256, 256],
            stage2_episodes: 128,
            stage2_minibatch: 128,
        }
    }
}

impl Hyperparams {
    /// Batch size used on the large dynamic domains.
    pub const DYNAMIC_BATCH: usize = 120_000;

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.sgd_iters > 0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.minibatch_size > 0
            && self.clip > 0.0
            && self.clip <= 1.0
            && self.kl_coeff >= 0.0
            && self.kl_target > 0.0
            && self.vf_coeff >= 0.0
            && self.entropy_coeff >= 0.0
            && (0.0..=1.0).contains(&self.gamma)
            && !self.hidden.is_empty()
            && !self.joint_hidden.is_empty()
            && self.stage2_episodes > 0
            && self.stage2_minibatch > 0;
        if ok {
            Ok(())
        } else {
            Err(LearnError::Config(format!("invalid hyperparameters: {self:?}")))
        }
    }
}

/// Running mean and variance of value targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Normalizer {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Normalizer {
    fn update(&mut self, xs: &[f64]) {
        for &x in xs {
            self.count += 1.0;
            let d = x - self.mean;
            self.mean += d / self.count;
            self.m2 += d * (x - self.mean);
        }
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt().max(1e-4)
        }
    }
}

/// Transitions of one learner, in collection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub samples: Vec<Sample>,
    /// Discounted return-to-go, bootstrapped at truncation.
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, sample: Sample, ret: f64) {
        self.obs.push(obs);
        self.samples.push(sample);
        self.returns.push(ret);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub kl_coeff: f64,
}

/// Loss of one minibatch and its gradient with respect to the policy
/// parameters (network, then log standard deviations).
pub fn surrogate_loss(
    policy: &Policy,
    obs: &[Vec<f64>],
    samples: &[Sample],
    advantages: &[f64],
    clip: f64,
    kl_coeff: f64,
    entropy_coeff: f64,
) -> (f64, Vec<f64>, f64, f64) {
    let head: &Head = &policy.head;
    let b = obs.len() as f64;
    let x = stack(obs, policy.net.input_dim());
    let (out, cache) = policy.net.forward(&x);
    let mut d_out = ndarray::Array2::zeros(out.raw_dim());
    let mut d_log_std = vec![0.0; head.num_dims()];
    let (mut loss, mut kl_sum, mut ent_sum) = (0.0, 0.0, 0.0);
    for (k, (s, &a)) in samples.iter().zip(advantages).enumerate() {
        let row = out.row(k).to_vec();
        let lp = log_prob(head, &row, &policy.log_std, &s.choices, &s.raw);
        let ratio = (lp.value - s.logp).exp();
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let (unclipped_obj, clipped_obj) = (ratio * a, clipped * a);
        // d(-min)/dlogp is -ratio * a when the unclipped term is the minimum.
        let coef = if unclipped_obj <= clipped_obj { -ratio * a } else { 0.0 };
        loss -= unclipped_obj.min(clipped_obj);
        let kd = kl(head, &s.out, &s.log_std, &row, &policy.log_std);
        let en = entropy(head, &row, &policy.log_std);
        loss += kl_coeff * kd.value - entropy_coeff * en.value;
        kl_sum += kd.value;
        ent_sum += en.value;
        for j in 0..row.len() {
            d_out[[k, j]] = (coef * lp.d_out[j] + kl_coeff * kd.d_out[j] - entropy_coeff * en.d_out[j]) / b;
        }
        for d in 0..d_log_std.len() {
            d_log_std[d] += (coef * lp.d_log_std[d] + kl_coeff * kd.d_log_std[d] - entropy_coeff * en.d_log_std[d]) / b;
        }
    }
    let mut grad = policy.net.backward(&cache, &d_out);
    grad.extend(d_log_std);
    (loss / b, grad, kl_sum / b, ent_sum / b)
}

/// One PPO learner: policy, value baseline and their optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub policy: Policy,
    pub value: Mlp,
    opt_policy: Optimizer,
    opt_value: Optimizer,
    returns: Normalizer,
    pub kl_coeff: f64,
}

impl Learner {
    pub fn new(obs_dim: usize, hidden: &[usize], head: Head, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Self {
        let policy = Policy::new(obs_dim, hidden, head, rng);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let value = Mlp::new(&sizes, 1.0, rng);
        let n_pi = policy.net.num_params() + policy.log_std.len();
        Self {
            opt_policy: Optimizer::new(hp.optimizer, hp.lr, hp.momentum, n_pi),
            opt_value: Optimizer::new(hp.optimizer, hp.lr, hp.momentum, value.num_params()),
            value,
            policy,
            returns: Normalizer { count: 0.0, mean: 0.0, m2: 0.0 },
            kl_coeff: hp.kl_coeff,
        }
    }

    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Sample {
        self.policy.sample(obs, rng)
    }

    /// Value estimate in return units.
    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.returns.mean + self.returns.std() * self.value.predict(obs)[0]
    }

    fn policy_params(&self) -> Vec<f64> {
        let mut p = self.policy.net.params.clone();
        p.extend_from_slice(&self.policy.log_std);
        p
    }

    fn set_policy_params(&mut self, p: &[f64]) {
        let n = self.policy.net.num_params();
        self.policy.net.params.copy_from_slice(&p[..n]);
        self.policy.log_std.copy_from_slice(&p[n..]);
    }

    /// `sgd_iters` shuffled minibatch passes over `batch`. On a non-finite
    /// loss the learner is restored and an error returned.
    pub fn update(&mut self, batch: &Batch, hp: &Hyperparams, minibatch: usize, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(LearnError::EmptyBatch);
        }
        if batch.returns.iter().any(|r| !r.is_finite()) {
            return Err(LearnError::NonFinite("returns".into()));
        }
        let snapshot = self.clone();
        match self.update_inner(batch, hp, minibatch, rng) {
            Ok(stats) => Ok(stats),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    fn update_inner(&mut self, batch: &Batch, hp: &Hyperparams, minibatch: usize, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let n = batch.len();
        let baseline: Vec<f64> = {
            let x = stack(&batch.obs, self.value.input_dim());
            let (v, _) = self.value.forward(&x);
            v.iter().map(|y| self.returns.mean + self.returns.std() * y).collect()
        };
        let mut adv: Vec<f64> = batch.returns.iter().zip(&baseline).map(|(r, b)| r - b).collect();
        if n > 1 {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
        }
        self.returns.update(&batch.returns);
        let (mu, sd) = (self.returns.mean, self.returns.std());
        let targets: Vec<f64> = batch.returns.iter().map(|r| (r - mu) / sd).collect();

        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        let mut passes = 0.0;
        for _ in 0..hp.sgd_iters {
            order.shuffle(rng);
            for chunk in order.chunks(minibatch.max(1)) {
                let obs: Vec<Vec<f64>> = chunk.iter().map(|&i| batch.obs[i].clone()).collect();
                let samples: Vec<Sample> = chunk.iter().map(|&i| batch.samples[i].clone()).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let (loss, grad, kl, ent) =
                    surrogate_loss(&self.policy, &obs, &samples, &a, hp.clip, self.kl_coeff, hp.entropy_coeff);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(LearnError::NonFinite(format!("policy loss {loss}")));
                }
                let mut params = self.policy_params();
                self.opt_policy.step(&mut params, &grad);
                self.set_policy_params(&params);

                let x = stack(&obs, self.value.input_dim());
                let (v, cache) = self.value.forward(&x);
                let b = chunk.len() as f64;
                let mut dv = v.clone();
                let mut vloss = 0.0;
                for (k, &i) in chunk.iter().enumerate() {
                    let e = v[[k, 0]] - targets[i];
                    vloss += 0.5 * e * e / b;
                    dv[[k, 0]] = hp.vf_coeff * e / b;
                }
                if !vloss.is_finite() {
                    return Err(LearnError::NonFinite(format!("value loss {vloss}")));
                }
                let vgrad = self.value.backward(&cache, &dv);
                self.opt_value.step(&mut self.value.params, &vgrad);
                stats.policy_loss += loss;
                stats.value_loss += vloss;
                stats.kl += kl;
                stats.entropy += ent;
                passes += 1.0;
            }
        }
        stats.policy_loss /= passes;
        stats.value_loss /= passes;
        stats.entropy /= passes;
        stats.kl /= passes;
        if stats.kl > 2.0 * hp.kl_target {
            self.kl_coeff *= 1.5;
        } else if stats.kl < 0.5 * hp.kl_target {
            self.kl_coeff *= 0.5;
        }
        stats.kl_coeff = self.kl_coeff;
        Ok(stats)
    }
}
