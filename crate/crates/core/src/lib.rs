//! Formal contracting for multi-agent Markov games.
//!
//! Agents may, before playing, sign a binding zero-sum reward-transfer
//! contract proposed by one of them. This crate holds the game abstractions,
//! the contract-augmented game construction, benchmark environments and an
//! exact equilibrium solver for small games.

pub mod augment;
pub mod contract;
pub mod envs;
pub mod equilibrium;
pub mod error;
pub mod forcing;
pub mod game;
pub mod rng;

pub use augment::{
    augment_general, augment_single_proposer, gifting_augment, AcceptanceRule, AugmentedGame, AugmentedState,
    ContractedGame, GiftState, GiftTiming, GiftingGame, Initiation, InitiationDynamics, ProposeAtStart,
    ReproposeEveryStep, VoidWithProbability,
};
pub use contract::{pay_to_all, pay_to_others, ActionFine, Contract, ContractSpace, TransferRule};
pub use error::{Error, Result};
pub use forcing::{forcing_contract, forcing_fine, ForcingRule};
pub use game::{
    discounted_returns, exact_values, fixed_action, has_detectable_deviators, rollout, welfare, Action, ActionSpace,
    AgentPolicy, FiniteMarkovGame, JointPolicyTable, MarkovGame, Step, Trajectory, ValueVector,
};
pub use rng::{Lane, SeedStream};
