//! Minimal neural-network substrate: MLPs with exact reverse-mode gradients,
//! a tanh-squashed Gaussian policy head, Adam and binary checkpoints.

mod adam;
mod checkpoint;
mod mlp;
mod policy;

pub use adam::{AdamState, ScalarAdam, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{Linear, Mlp, MlpCache};
pub use policy::{
    log_one_minus_tanh_sq, standard_normal, GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN,
};
