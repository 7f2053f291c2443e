use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{clamp_action, EnvId, Environment, Phase, StepResult};
use crate::error::{Error, Result};

pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
/// Training episodes end, and membership fails, beyond this angle from upright.
pub const UPRIGHT_LIMIT: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    /// Angle from upright, wrapped to (−π, π].
    pub theta: f64,
    pub theta_dot: f64,
}

/// Torque-limited rod pendulum. Training keeps it near upright and ends the
/// episode when it falls; retraining starts it hanging down.
#[derive(Clone, Debug)]
pub struct Pendulum {
    phase: Phase,
    state: PendulumState,
    steps: usize,
    finished: bool,
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl Pendulum {
    pub fn new(phase: Phase) -> Self {
        Pendulum {
            phase,
            state: PendulumState {
                theta: 0.0,
                theta_dot: 0.0,
            },
            steps: 0,
            finished: false,
        }
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = PendulumState {
            theta: wrap_angle(state.theta),
            theta_dot: state.theta_dot.clamp(-MAX_SPEED, MAX_SPEED),
        };
        self.steps = 0;
        self.finished = false;
    }

    pub fn is_upright(theta: f64) -> bool {
        theta.abs() <= UPRIGHT_LIMIT
    }

    /// One semi-implicit Euler step under torque `torque` (already scaled).
    pub fn dynamics(state: PendulumState, torque: f64) -> PendulumState {
        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * state.theta.sin() + 3.0 * torque / (MASS * LENGTH * LENGTH);
        let theta_dot = (state.theta_dot + DT * accel).clamp(-MAX_SPEED, MAX_SPEED);
        PendulumState {
            theta: wrap_angle(state.theta + DT * theta_dot),
            theta_dot,
        }
    }

    pub fn reward(state: PendulumState, torque: f64) -> f64 {
        state.theta.cos() - 0.01 * state.theta_dot * state.theta_dot - 0.001 * torque * torque
    }

    /// Mechanical energy of the uniform rod, zero potential at the pivot.
    pub fn energy(state: PendulumState) -> f64 {
        let inertia = MASS * LENGTH * LENGTH / 3.0;
        0.5 * inertia * state.theta_dot * state.theta_dot + MASS * GRAVITY * LENGTH / 2.0 * state.theta.cos()
    }
}

impl Environment for Pendulum {
    fn id(&self) -> EnvId {
        EnvId::Pendulum
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        match self.phase {
            Phase::Training => 200,
            Phase::Retraining => 500,
        }
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let state = match self.phase {
            Phase::Training => PendulumState {
                theta: rng.random_range(-0.3..=0.3),
                theta_dot: rng.random_range(-0.5..=0.5),
            },
            Phase::Retraining => PendulumState {
                theta: PI + rng.random_range(-0.1..=0.1),
                theta_dot: 0.0,
            },
        };
        self.set_state(state);
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.finished {
            return Err(Error::State("step called after the episode ended".into()));
        }
        let a = clamp_action(action, 1)?;
        let torque = MAX_TORQUE * a[0];
        self.state = Self::dynamics(self.state, torque);
        self.steps += 1;
        let in_distribution = Self::is_upright(self.state.theta);
        let terminated = self.phase == Phase::Training && !in_distribution;
        let truncated = !terminated && self.steps >= self.horizon();
        self.finished = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            env_reward: Self::reward(self.state, torque),
            terminated,
            truncated,
            in_distribution,
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.state.theta.cos(), self.state.theta.sin(), self.state.theta_dot]
    }

    fn in_distribution(&self) -> bool {
        Self::is_upright(self.state.theta)
    }
}
