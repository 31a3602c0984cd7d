//! From-scratch actor-critic PPO.
//!
//! Networks use tanh activations with LayerNorm and dropout after every
//! hidden layer; dropout is active only in update-phase forward passes.
//! Rewards are scaled by the running standard deviation of a discounted
//! reward sum and both learning rates decay linearly to zero.

pub mod adam;
pub mod buffer;
pub mod loss;
pub mod net;
pub mod normalizer;
pub mod policy;
pub mod trainer;

pub use buffer::{gae, RolloutBuffer};
pub use loss::{actor_loss, critic_loss, ActorBatch, ActorLoss};
pub use net::{Mlp, NetworkSpec};
pub use normalizer::NormalizerState;
pub use policy::{ActMode, Policy};
pub use trainer::{lr_at, OdSchedule, StopRule, Trainer, TrainerConfig, TrainingOutcome, TrainingWorld};
