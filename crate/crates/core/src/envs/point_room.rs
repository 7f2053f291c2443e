use rand::{Rng, RngCore};

use super::{clamp_action, EnvId, Environment, Phase, StepResult};
use crate::error::{Error, Result};

const STEP_SCALE: f64 = 0.05;
const GOAL: [f64; 2] = [0.2, 0.8];
const HORIZON: usize = 200;
const WALL_X: f64 = 1.0;
const DOOR: (f64, f64) = (0.4, 0.6);
const ANNEX_MAX_X: f64 = 2.0;
/// Closest legal x on the annex side of the dividing wall.
const ANNEX_EDGE: f64 = WALL_X + 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointRoomState {
    pub x: f64,
    pub y: f64,
}

/// A point mass in the unit room. The retraining variant adds an annex
/// `(1, 2] × [0, 1]` connected through a door in the wall at `x = 1`.
#[derive(Clone, Debug)]
pub struct PointRoom {
    phase: Phase,
    state: PointRoomState,
    steps: usize,
    finished: bool,
}

impl PointRoom {
    pub fn new(phase: Phase) -> Self {
        PointRoom {
            phase,
            state: PointRoomState { x: 0.5, y: 0.5 },
            steps: 0,
            finished: false,
        }
    }

    pub fn state(&self) -> PointRoomState {
        self.state
    }

    /// Places the agent at `state` and starts a fresh episode there.
    pub fn set_state(&mut self, state: PointRoomState) {
        self.state = state;
        self.steps = 0;
        self.finished = false;
    }

    pub fn in_room(state: PointRoomState) -> bool {
        (0.0..=1.0).contains(&state.x) && (0.0..=1.0).contains(&state.y)
    }

    pub fn reward_at(state: PointRoomState) -> f64 {
        -((state.x - GOAL[0]).powi(2) + (state.y - GOAL[1]).powi(2)).sqrt()
    }

    fn constrain(&self, from: PointRoomState, to: PointRoomState) -> PointRoomState {
        match self.phase {
            Phase::Training => PointRoomState {
                x: to.x.clamp(0.0, 1.0),
                y: to.y.clamp(0.0, 1.0),
            },
            Phase::Retraining => {
                let mut next = PointRoomState {
                    x: to.x.clamp(0.0, ANNEX_MAX_X),
                    y: to.y.clamp(0.0, 1.0),
                };
                let from_room = from.x <= WALL_X;
                let to_room = next.x <= WALL_X;
                if from_room != to_room {
                    let t = (WALL_X - from.x) / (next.x - from.x);
                    let y_cross = from.y + t * (next.y - from.y);
                    if !(DOOR.0..=DOOR.1).contains(&y_cross) {
                        next.x = if from_room { WALL_X } else { ANNEX_EDGE };
                    }
                }
                next
            }
        }
    }
}

impl Environment for PointRoom {
    fn id(&self) -> EnvId {
        EnvId::PointRoom
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let state = match self.phase {
            Phase::Training => PointRoomState {
                x: rng.random_range(0.05..=0.95),
                y: rng.random_range(0.05..=0.95),
            },
            Phase::Retraining => PointRoomState {
                x: 1.8 + rng.random_range(-0.05..=0.05),
                y: 0.5 + rng.random_range(-0.05..=0.05),
            },
        };
        self.set_state(state);
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.finished {
            return Err(Error::State("step called after the episode ended".into()));
        }
        let a = clamp_action(action, 2)?;
        let proposed = PointRoomState {
            x: self.state.x + STEP_SCALE * a[0],
            y: self.state.y + STEP_SCALE * a[1],
        };
        self.state = self.constrain(self.state, proposed);
        self.steps += 1;
        let truncated = self.steps >= HORIZON;
        self.finished = truncated;
        Ok(StepResult {
            observation: self.observation(),
            env_reward: Self::reward_at(self.state),
            terminated: false,
            truncated,
            in_distribution: self.in_distribution(),
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.state.x, self.state.y]
    }

    fn in_distribution(&self) -> bool {
        Self::in_room(self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn at(phase: Phase, x: f64, y: f64) -> PointRoom {
        let mut env = PointRoom::new(phase);
        env.set_state(PointRoomState { x, y });
        env
    }

    #[test]
    fn step_from_center() {
        let mut env = at(Phase::Training, 0.5, 0.5);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert!((r.observation[0] - 0.55).abs() < 1e-15);
        assert_eq!(r.observation[1], 0.5);
        let expect = -(0.35f64.powi(2) + 0.3f64.powi(2)).sqrt();
        assert!((r.env_reward - expect).abs() < 1e-12);
        assert!((r.env_reward + 0.4610).abs() < 1e-4);
    }

    #[test]
    fn retraining_spawn_is_outside() {
        let mut env = PointRoom::new(Phase::Retraining);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            env.reset(&mut rng);
            assert!(!env.in_distribution());
            let s = env.state();
            assert!((1.75..=1.85).contains(&s.x) && (0.45..=0.55).contains(&s.y));
        }
    }

    #[test]
    fn spawn_is_seeded() {
        let mut a = PointRoom::new(Phase::Training);
        let mut b = PointRoom::new(Phase::Training);
        assert_eq!(
            a.reset(&mut ChaCha8Rng::seed_from_u64(3)),
            b.reset(&mut ChaCha8Rng::seed_from_u64(3))
        );
    }

    #[test]
    fn membership_boundaries() {
        assert!(!PointRoom::in_room(PointRoomState { x: 1.5, y: 0.5 }));
        assert!(PointRoom::in_room(PointRoomState { x: 1.0, y: 0.5 }));
    }

    #[test]
    fn training_walls_hold() {
        let mut env = at(Phase::Training, 0.98, 0.5);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(r.observation, vec![1.0, 0.5]);
        assert!(r.in_distribution);
    }

    #[test]
    fn door_lets_agent_through_only_between_its_posts() {
        let mut env = at(Phase::Retraining, 1.02, 0.5);
        let r = env.step(&[-1.0, 0.0]).unwrap();
        assert!((r.observation[0] - 0.97).abs() < 1e-12);
        assert!(r.in_distribution);

        let mut env = at(Phase::Retraining, 1.02, 0.8);
        let r = env.step(&[-1.0, 0.0]).unwrap();
        assert_eq!(r.observation[0], ANNEX_EDGE);
        assert!(!r.in_distribution);

        let mut env = at(Phase::Retraining, 0.98, 0.2);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(r.observation[0], 1.0);
    }

    #[test]
    fn truncates_at_horizon_and_then_refuses_steps() {
        let mut env = at(Phase::Training, 0.5, 0.5);
        for i in 0..HORIZON {
            let r = env.step(&[0.0, 0.0]).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, i + 1 == HORIZON);
        }
        assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::State(_))));
    }

    proptest! {
        #[test]
        fn training_variant_never_leaves_the_room(
            seed in 0u64..1000,
            actions in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..200)
        ) {
            let mut env = PointRoom::new(Phase::Training);
            env.reset(&mut ChaCha8Rng::seed_from_u64(seed));
            for (ax, ay) in actions {
                let r = env.step(&[ax, ay]).unwrap();
                prop_assert!(r.in_distribution);
            }
        }

        #[test]
        fn retraining_variant_stays_in_room_or_annex(
            actions in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..200)
        ) {
            let mut env = PointRoom::new(Phase::Retraining);
            env.reset(&mut ChaCha8Rng::seed_from_u64(0));
            for (ax, ay) in actions {
                let before = env.state();
                env.step(&[ax, ay]).unwrap();
                let s = env.state();
                prop_assert!((0.0..=2.0).contains(&s.x) && (0.0..=1.0).contains(&s.y));
                // Crossing the wall is only possible through the door.
                if (before.x <= 1.0) != (s.x <= 1.0) {
                    prop_assert!(before.y.min(s.y) <= 0.6 + 0.05 && before.y.max(s.y) >= 0.4 - 0.05);
                }
            }
        }
    }
}
