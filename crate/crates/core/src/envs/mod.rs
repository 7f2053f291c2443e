//! Continuous-control tasks with a training variant, whose reachable region
//! defines the learned state distribution, and a retraining variant that
//! starts the agent outside it.

mod pendulum;
mod point_room;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{Pendulum, PendulumState};
pub use point_room::{PointRoom, PointRoomState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Retraining,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PointRoom,
    Pendulum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub env_reward: f64,
    /// Genuine end of the episode (not bootstrapped).
    pub terminated: bool,
    /// Horizon reached.
    pub truncated: bool,
    /// Whether the new state lies in the training region.
    pub in_distribution: bool,
}

pub trait Environment: Send {
    fn id(&self) -> EnvId;
    fn phase(&self) -> Phase;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn observation(&self) -> Vec<f64>;
    /// Privileged membership test of the current state in the training region.
    fn in_distribution(&self) -> bool;
}

pub fn make_env(id: EnvId, phase: Phase) -> Box<dyn Environment> {
    match id {
        EnvId::PointRoom => Box::new(PointRoom::new(phase)),
        EnvId::Pendulum => Box::new(Pendulum::new(phase)),
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvId::PointRoom => "point_room",
            EnvId::Pendulum => "pendulum",
        })
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_room" => Ok(EnvId::PointRoom),
            "pendulum" => Ok(EnvId::Pendulum),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Training => "training",
            Phase::Retraining => "retraining",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Phase::Training),
            "retraining" => Ok(Phase::Retraining),
            other => Err(Error::Config(format!("unknown phase `{other}`"))),
        }
    }
}

fn clamp_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::shape(format!(
            "action has {} components, environment expects {dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::Argument("action contains NaN".into()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}
