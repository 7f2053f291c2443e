use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::Matrix;
use crate::error::{Error, Result};

/// One environment step as stored for learning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub env_reward: f64,
    /// Reward actually learned from, fixed at collection time.
    pub effective_reward: f64,
    pub next_state: Vec<f64>,
    /// Genuine termination; horizon truncation leaves this false.
    pub done: bool,
    pub d_u_state: f64,
    pub d_u_next: f64,
    pub in_dist_state: bool,
    pub in_dist_next: bool,
}

/// Bounded FIFO replay memory with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        let picks: Vec<&Transition> = (0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Batch::from_transitions(&picks)
    }
}

/// Column-stacked view of sampled transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
    pub d_u: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::Argument("a batch needs at least one transition".into()));
        }
        let states = Matrix::from_rows(&ts.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let actions = Matrix::from_rows(&ts.iter().map(|t| t.action.as_slice()).collect::<Vec<_>>())?;
        let next_states = Matrix::from_rows(&ts.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
        Ok(Batch {
            states,
            actions,
            next_states,
            rewards: ts.iter().map(|t| t.effective_reward).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
            d_u: ts.iter().map(|t| t.d_u_state).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}
