//! Uncertainty-guided recovery from out-of-distribution states.
//!
//! An agent trained with soft actor-critic is later dropped into states it
//! never visited. Monte-Carlo dropout on the policy's feature encoder yields
//! an uncertainty distance in `[0, 1]`; its negation rewards the agent for
//! heading back toward familiar states, and a KL penalty toward the frozen
//! pre-trained policy, weighted by `1 − distance`, keeps the original skill
//! intact once it gets there.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// over matrix rows read better than zipped iterators in the numeric code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approximator;
pub mod envs;
mod error;
pub mod harness;
pub mod learner;
pub mod policy;
pub mod uncertainty;

pub use approximator::{Activation, DropoutMask, GradientSet, Matrix, Mlp};
pub use envs::{make_env, EnvId, Environment, Phase, StepResult};
pub use error::{Error, Result};
pub use learner::{Agent, LearnerConfig, RewardMode, SacState, Transition};
pub use policy::{ActionDistribution, GaussianPolicy};
pub use uncertainty::{UncertaintyTracker, UncertaintyVector};
