//! Stochastic policy heads: categorical choices and box-clamped Gaussians.

use contracting_core::{Action, ActionSpace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::Mlp;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;
pub const INIT_LOG_STD: f64 = -0.5;

/// The part of a head that produces one [`Action`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPart {
    /// Zero when there is no discrete choice.
    pub choices: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionPart {
    pub fn from_space(space: &ActionSpace) -> Self {
        Self { choices: space.num_choices(), low: space.low().to_vec(), high: space.high().to_vec() }
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    /// Map a raw Gaussian draw to the box: `[-1, 1]` covers it, beyond is clamped.
    pub fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(u, (lo, hi))| lo + (hi - lo) * (u.clamp(-1.0, 1.0) + 1.0) / 2.0)
            .collect()
    }

    /// Inverse of [`squash`](Self::squash) on the box.
    pub fn unsquash(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(v, (lo, hi))| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 })
            .collect()
    }
}

/// One or more action parts sharing a network: one part per agent, or one
/// per agent of a factored joint policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub parts: Vec<ActionPart>,
}

impl Head {
    pub fn new(parts: Vec<ActionPart>) -> Self {
        Self { parts }
    }

    pub fn single(space: &ActionSpace) -> Self {
        Self::new(vec![ActionPart::from_space(space)])
    }

    pub fn num_logits(&self) -> usize {
        self.parts.iter().map(|p| p.choices).sum()
    }

    pub fn num_dims(&self) -> usize {
        self.parts.iter().map(ActionPart::dims).sum()
    }

    /// Network outputs: every categorical's logits, then every mean.
    pub fn output_dim(&self) -> usize {
        self.num_logits() + self.num_dims()
    }

    fn categoricals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut offset = 0;
        self.parts.iter().filter(|p| p.choices > 0).map(move |p| {
            let r = (offset, p.choices);
            offset += p.choices;
            r
        })
    }

    pub fn to_actions(&self, choices: &[usize], raw: &[f64]) -> Vec<Action> {
        let mut c = choices.iter();
        let mut offset = 0;
        self.parts
            .iter()
            .map(|p| {
                let choice = if p.choices > 0 { Some(*c.next().expect("one choice per categorical")) } else { None };
                let values = p.squash(&raw[offset..offset + p.dims()]);
                offset += p.dims();
                Action { choice, values }
            })
            .collect()
    }
}

/// A draw from the policy together with what PPO needs to re-score it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub choices: Vec<usize>,
    pub raw: Vec<f64>,
    pub logp: f64,
    /// Network output when sampled.
    pub out: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// A scalar of the distribution and its gradient with respect to the
/// network output and the log standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub d_out: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

impl Scored {
    fn zeros(head: &Head) -> Self {
        Self { value: 0.0, d_out: vec![0.0; head.output_dim()], d_log_std: vec![0.0; head.num_dims()] }
    }
}

pub fn log_prob(head: &Head, out: &[f64], log_std: &[f64], choices: &[usize], raw: &[f64]) -> Scored {
    let mut s = Scored::zeros(head);
    for ((offset, k), &c) in head.categoricals().zip(choices) {
        let p = softmax(&out[offset..offset + k]);
        s.value += p[c].max(1e-300).ln();
        for j in 0..k {
            s.d_out[offset + j] = f64::from(u8::from(j == c)) - p[j];
        }
    }
    let base = head.num_logits();
    for d in 0..head.num_dims() {
        let (mu, ls) = (out[base + d], log_std[d]);
        let var = (2.0 * ls).exp();
        let diff = raw[d] - mu;
        s.value += -diff * diff / (2.0 * var) - ls - HALF_LOG_2PI;
        s.d_out[base + d] = diff / var;
        s.d_log_std[d] = diff * diff / var - 1.0;
    }
    s
}

/// `KL(old || new)`, differentiated with respect to the new distribution.
pub fn kl(head: &Head, old_out: &[f64], old_log_std: &[f64], out: &[f64], log_std: &[f64]) -> Scored {
    let mut s = Scored::zeros(head);
    for (offset, k) in head.categoricals() {
        let po = softmax(&old_out[offset..offset + k]);
        let pn = softmax(&out[offset..offset + k]);
        for j in 0..k {
            if po[j] > 0.0 {
                s.value += po[j] * (po[j].ln() - pn[j].max(1e-300).ln());
            }
            s.d_out[offset + j] = pn[j] - po[j];
        }
    }
    let base = head.num_logits();
    for d in 0..head.num_dims() {
        let (mo, mn) = (old_out[base + d], out[base + d]);
        let (lo, ln) = (old_log_std[d], log_std[d]);
        let (vo, vn) = ((2.0 * lo).exp(), (2.0 * ln).exp());
        let num = vo + (mo - mn) * (mo - mn);
        s.value += ln - lo + num / (2.0 * vn) - 0.5;
        s.d_out[base + d] = (mn - mo) / vn;
        s.d_log_std[d] = 1.0 - num / vn;
    }
    s
}

pub fn entropy(head: &Head, out: &[f64], log_std: &[f64]) -> Scored {
    let mut s = Scored::zeros(head);
    for (offset, k) in head.categoricals() {
        let p = softmax(&out[offset..offset + k]);
        let h: f64 = -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        s.value += h;
        for j in 0..k {
            s.d_out[offset + j] = -p[j] * (p[j].max(1e-300).ln() + h);
        }
    }
    for d in 0..head.num_dims() {
        s.value += log_std[d] + 0.5 + HALF_LOG_2PI;
        s.d_log_std[d] = 1.0;
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
    pub head: Head,
}

impl Policy {
    pub fn new(obs_dim: usize, hidden: &[usize], head: Head, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(head.output_dim());
        let net = Mlp::new(&sizes, 0.01, rng);
        Self { net, log_std: vec![INIT_LOG_STD; head.num_dims()], head }
    }

    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Sample {
        let out = self.net.predict(obs);
        let mut choices = Vec::new();
        for (offset, k) in self.head.categoricals() {
            let p = softmax(&out[offset..offset + k]);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = k - 1;
            for (j, pj) in p.iter().enumerate() {
                acc += pj;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            choices.push(pick);
        }
        let base = self.head.num_logits();
        let raw: Vec<f64> = (0..self.head.num_dims())
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                out[base + d] + self.log_std[d].exp() * z
            })
            .collect();
        let logp = log_prob(&self.head, &out, &self.log_std, &choices, &raw).value;
        Sample { choices, raw, logp, out, log_std: self.log_std.clone() }
    }

    /// Most likely choices and the Gaussian means.
    pub fn greedy(&self, obs: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let out = self.net.predict(obs);
        let choices = self
            .head
            .categoricals()
            .map(|(offset, k)| {
                let logits = &out[offset..offset + k];
                (0..k).fold(0, |best, j| if logits[j] > logits[best] { j } else { best })
            })
            .collect();
        (choices, out[self.head.num_logits()..].to_vec())
    }

    pub fn probabilities(&self, obs: &[f64]) -> Vec<Vec<f64>> {
        let out = self.net.predict(obs);
        self.head.categoricals().map(|(offset, k)| softmax(&out[offset..offset + k])).collect()
    }

    pub fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<Action> {
        let s = self.sample(obs, rng);
        self.head.to_actions(&s.choices, &s.raw)
    }

    pub fn act_greedy(&self, obs: &[f64]) -> Vec<Action> {
        let (c, raw) = self.greedy(obs);
        self.head.to_actions(&c, &raw)
    }
}
