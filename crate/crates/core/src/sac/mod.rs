//! Soft Actor-Critic with twin critics, automatic entropy tuning and three
//! optional regularizers (reward-action, policy-weight, policy-output).

mod agent;
mod config;
mod regularizer;
mod replay;
mod train;

pub use agent::{
    policy_from_checkpoint, soft_update, ActorEval, CriticEval, SacAgent, UpdateStats,
};
pub use config::{AlphaMode, RegUnits, SacConfig, WarmupAction};
pub use regularizer::{quad_form, regularized_q, reward_shape, RegularizerSpec};
pub use replay::{Batch, ReplayBuffer, Transition};
pub(crate) use train::normalized_reg;
pub use train::{log_csv, rollout, train, EvalRow, LogRow, Rollout, TrainOutcome, LOG_CSV_HEADER};
