use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::auxiliary_reward;

/// How the reward stored with a transition is derived from the environment
/// reward and the uncertainty signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Environment reward everywhere.
    EnvOnly,
    /// Environment reward in the training region, zero outside.
    ZeroOod,
    /// Environment reward in the training region, scaled auxiliary reward outside.
    AuxManual,
    /// As `AuxManual`, with membership decided by `d_u < ε`.
    AuxOwnCriterion,
}

impl RewardMode {
    pub fn needs_uncertainty(self) -> bool {
        matches!(self, RewardMode::AuxManual | RewardMode::AuxOwnCriterion)
    }
}

/// Effective reward for one transition.
pub fn select_reward(
    mode: RewardMode,
    in_dist_state: bool,
    d_u_state: f64,
    env_reward: f64,
    d_u_next: f64,
    lambda: f64,
    epsilon: f64,
) -> f64 {
    let aux = || lambda * auxiliary_reward(d_u_next);
    match mode {
        RewardMode::EnvOnly => env_reward,
        RewardMode::ZeroOod => {
            if in_dist_state {
                env_reward
            } else {
                0.0
            }
        }
        RewardMode::AuxManual => {
            if in_dist_state {
                env_reward
            } else {
                aux()
            }
        }
        RewardMode::AuxOwnCriterion => {
            if d_u_state < epsilon {
                env_reward
            } else {
                aux()
            }
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::EnvOnly => "env_only",
            RewardMode::ZeroOod => "zero_ood",
            RewardMode::AuxManual => "aux_manual",
            RewardMode::AuxOwnCriterion => "aux_own_criterion",
        })
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "env_only" => Ok(RewardMode::EnvOnly),
            "zero_ood" => Ok(RewardMode::ZeroOod),
            "aux_manual" => Ok(RewardMode::AuxManual),
            "aux_own_criterion" => Ok(RewardMode::AuxOwnCriterion),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}
