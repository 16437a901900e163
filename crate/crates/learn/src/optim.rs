//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Heavy-ball SGD.
    Momentum,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    velocity: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    /// `momentum` doubles as Adam's first-moment decay.
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, size: usize) -> Self {
        Self { kind, lr, momentum, velocity: vec![0.0; size], second: vec![0.0; size], steps: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Descend along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.velocity.len());
        self.steps += 1;
        match self.kind {
            OptimizerKind::Momentum => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
                    *v = self.momentum * *v + g;
                    *p -= self.lr * *v;
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - self.momentum.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for (((p, m), v), g) in params.iter_mut().zip(&mut self.velocity).zip(&mut self.second).zip(grad) {
                    *m = self.momentum * *m + (1.0 - self.momentum) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(kind: OptimizerKind, lr: f64, beta: f64) -> f64 {
        let mut x = vec![3.0, -2.0];
        let mut opt = Optimizer::new(kind, lr, beta, 2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn both_minimize_a_quadratic() {
        assert!(minimize(OptimizerKind::Momentum, 1e-3, 0.9) < 1e-6);
        assert!(minimize(OptimizerKind::Adam, 1e-2, 0.9) < 1e-4);
    }
}
