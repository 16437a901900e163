//! PPO learners for Markov games: independent agents, a joint welfare
//! maximizer, reward gifting, and two-stage contracting.

pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod rollout;
pub mod train;

pub use error::{LearnError, Result};
pub use eval::{evaluate_policies, EvalReport, LearnedAgent};
pub use optim::OptimizerKind;
pub use policy::{Head, Policy};
pub use ppo::{Hyperparams, Learner};
pub use rollout::Control;
pub use train::{
    evaluate_contracting, negotiation_train_stage2, stage_budgets, subgame_train_stage1, train_contracting,
    train_gifting, train_joint, train_separate, Algorithm, IterationStats, PlayProfile, Snapshot, TrainReport,
};
