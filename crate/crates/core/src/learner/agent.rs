use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::replay::{ReplayBuffer, Transition};
use super::reward::select_reward;
use super::sac::{LearnerConfig, SacState, UpdateStats};
use crate::envs::{Environment, Phase};
use crate::error::{Error, Result};
use crate::policy::ActMode;
use crate::uncertainty::{mc_uncertainty, UncertaintyVector};

const POLICY_STREAM: u64 = 0;
const UNCERTAINTY_STREAM: u64 = 1;
const ENV_STREAM: u64 = 2;

/// What the agent knows about the current (not yet acted upon) state.
#[derive(Clone, Debug)]
struct Cursor {
    observation: Vec<f64>,
    in_distribution: bool,
    d_u: f64,
}

/// A collected transition together with the uncertainty data behind it.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub transition: Transition,
    /// Uncertainty vector of the next state, when uncertainty is tracked.
    pub sigma_u_next: Option<UncertaintyVector>,
    /// Tracker maximum after observing the next state.
    pub sigma_max: Option<Vec<f64>>,
    pub truncated: bool,
}

impl StepRecord {
    pub fn episode_ended(&self) -> bool {
        self.transition.done || self.truncated
    }
}

/// Learner plus its replay memory and random streams, driving one
/// environment. Policy sampling, uncertainty masks and environment resets
/// draw from independent streams of the same seed.
pub struct Agent {
    pub sac: SacState,
    pub cfg: LearnerConfig,
    pub replay: ReplayBuffer,
    phase: Phase,
    track_uncertainty: bool,
    rng: ChaCha8Rng,
    uncertainty_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    cursor: Option<Cursor>,
    steps: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Agent {
    /// `track_uncertainty = false` gives the plain soft actor-critic path: no
    /// dropout passes, uncertainty distances fixed at 0.
    pub fn new(sac: SacState, cfg: LearnerConfig, phase: Phase, seed: u64, track_uncertainty: bool) -> Result<Self> {
        cfg.validate()?;
        if cfg.reward_mode.needs_uncertainty() && !track_uncertainty {
            return Err(Error::Config(format!(
                "reward mode {} needs uncertainty tracking",
                cfg.reward_mode
            )));
        }
        if phase == Phase::Retraining && track_uncertainty && sac.original_policy().is_none() {
            return Err(Error::Config(
                "retraining measures uncertainty with the frozen original policy, which is missing".into(),
            ));
        }
        if cfg.upc && sac.original_policy().is_none() {
            return Err(Error::Config("consolidation requires a frozen original policy".into()));
        }
        Ok(Agent {
            replay: ReplayBuffer::new(cfg.buffer_capacity)?,
            sac,
            cfg,
            phase,
            track_uncertainty,
            rng: stream(seed, POLICY_STREAM),
            uncertainty_rng: stream(seed, UNCERTAINTY_STREAM),
            env_rng: stream(seed, ENV_STREAM),
            cursor: None,
            steps: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Current state of the policy, uncertainty and environment streams.
    pub fn rng_streams(&self) -> BTreeMap<String, ChaCha8Rng> {
        [
            ("policy", &self.rng),
            ("uncertainty", &self.uncertainty_rng),
            ("environment", &self.env_rng),
        ]
        .into_iter()
        .map(|(k, r)| (k.to_string(), r.clone()))
        .collect()
    }

    pub fn tracks_uncertainty(&self) -> bool {
        self.track_uncertainty
    }

    /// Drops the current episode so the next step starts from a reset.
    pub fn end_episode(&mut self) {
        self.cursor = None;
    }

    /// Uncertainty vector and distance of `observation`, feeding the tracker.
    /// During training the current encoder is used and the distance is
    /// recorded as 0; during retraining the frozen original encoder is used.
    fn observe(&mut self, observation: &[f64]) -> Result<(Option<UncertaintyVector>, f64)> {
        if !self.track_uncertainty {
            return Ok((None, 0.0));
        }
        let encoder = match self.phase {
            Phase::Training => &self.sac.policy.encoder,
            Phase::Retraining => {
                &self
                    .sac
                    .original_policy()
                    .ok_or_else(|| Error::Config("no frozen original policy".into()))?
                    .encoder
            }
        };
        let sigma = mc_uncertainty(encoder, observation, self.cfg.n_passes, &mut self.uncertainty_rng)?;
        self.sac.tracker.update(&sigma)?;
        let d_u = match self.phase {
            Phase::Training => 0.0,
            Phase::Retraining => self.sac.tracker.distance(&sigma)?,
        };
        Ok((Some(sigma), d_u))
    }

    fn begin_episode(&mut self, env: &mut dyn Environment) -> Result<Cursor> {
        let observation = env.reset(&mut self.env_rng);
        let in_distribution = env.in_distribution();
        let (_, d_u) = self.observe(&observation)?;
        Ok(Cursor {
            observation,
            in_distribution,
            d_u,
        })
    }

    /// Acts once in `env` (resetting it first if no episode is running),
    /// stores the transition and returns it.
    pub fn collect_step(&mut self, env: &mut dyn Environment) -> Result<StepRecord> {
        let cursor = match self.cursor.take() {
            Some(c) => c,
            None => self.begin_episode(env)?,
        };
        let action = if self.steps < self.cfg.warmup_steps as u64 {
            (0..env.action_dim()).map(|_| self.rng.random_range(-1.0..1.0)).collect()
        } else {
            self.sac
                .policy
                .act(&cursor.observation, ActMode::Stochastic, &mut self.rng)?
                .action
        };
        let result = env.step(&action)?;
        let (sigma_u_next, d_u_next) = self.observe(&result.observation)?;
        let effective_reward = select_reward(
            self.cfg.reward_mode,
            cursor.in_distribution,
            cursor.d_u,
            result.env_reward,
            d_u_next,
            self.cfg.lambda,
            self.cfg.epsilon,
        );
        let transition = Transition {
            state: cursor.observation,
            action,
            env_reward: result.env_reward,
            effective_reward,
            next_state: result.observation.clone(),
            done: result.terminated,
            d_u_state: cursor.d_u,
            d_u_next,
            in_dist_state: cursor.in_distribution,
            in_dist_next: result.in_distribution,
        };
        self.replay.push(transition.clone());
        self.steps += 1;
        if !(result.terminated || result.truncated) {
            self.cursor = Some(Cursor {
                observation: result.observation,
                in_distribution: result.in_distribution,
                d_u: d_u_next,
            });
        }
        Ok(StepRecord {
            transition,
            sigma_max: sigma_u_next.as_ref().and(self.sac.tracker.sigma_max().map(<[f64]>::to_vec)),
            sigma_u_next,
            truncated: result.truncated,
        })
    }

    /// One gradient update from a replay sample once enough data exists.
    pub fn learn(&mut self) -> Result<Option<UpdateStats>> {
        let ready = self.replay.len() >= self.cfg.batch_size && self.steps >= self.cfg.warmup_steps as u64;
        if !ready {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng)?;
        self.sac.update(&batch, &self.cfg, &mut self.rng).map(Some)
    }

    /// Collect then learn.
    pub fn step(&mut self, env: &mut dyn Environment) -> Result<(StepRecord, Option<UpdateStats>)> {
        let record = self.collect_step(env)?;
        let stats = self.learn()?;
        Ok((record, stats))
    }
}
