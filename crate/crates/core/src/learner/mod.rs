//! Soft actor-critic with twin critics, the uncertainty-driven reward switch
//! and uncertainty-weighted policy consolidation.

mod agent;
mod replay;
mod reward;
mod sac;

pub use agent::{Agent, StepRecord};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use reward::{select_reward, RewardMode};
pub use sac::{CriticStats, LearnerConfig, PolicyOptimizer, PolicyStats, SacState, UpdateStats};
