//! Fixtures shared by the benchmarks.

use oodrl_core::learner::{Batch, ReplayBuffer};
use oodrl_core::{make_env, Agent, EnvId, LearnerConfig, Phase, Result, SacState, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn config(width: usize) -> LearnerConfig {
    LearnerConfig {
        hidden: vec![width, width],
        feature_dim: width,
        ..LearnerConfig::default()
    }
}

/// Uniform batch of synthetic transitions.
pub fn batch(obs_dim: usize, action_dim: usize, size: usize, seed: u64) -> Result<Batch> {
    let mut r = rng(seed);
    let mut buf = ReplayBuffer::new(size)?;
    let v = |n: usize, r: &mut ChaCha8Rng| (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    for _ in 0..size {
        let reward = r.random_range(-1.0..0.0);
        buf.push(Transition {
            state: v(obs_dim, &mut r),
            action: v(action_dim, &mut r),
            env_reward: reward,
            effective_reward: reward,
            next_state: v(obs_dim, &mut r),
            done: false,
            d_u_state: 0.1,
            d_u_next: 0.1,
            in_dist_state: true,
            in_dist_next: true,
        });
    }
    buf.sample(size, &mut r)
}

pub fn sac(obs_dim: usize, action_dim: usize, cfg: &LearnerConfig, seed: u64) -> Result<SacState> {
    SacState::new(obs_dim, action_dim, cfg, &mut rng(seed))
}

/// A training agent on PointRoom past its warmup, so every step updates.
pub fn warm_agent(cfg: LearnerConfig, track: bool) -> Result<(Agent, Box<dyn oodrl_core::Environment>)> {
    let mut env = make_env(EnvId::PointRoom, Phase::Training);
    let sac = sac(env.obs_dim(), env.action_dim(), &cfg, 0)?;
    let warmup = cfg.warmup_steps;
    let mut agent = Agent::new(sac, cfg, Phase::Training, 0, track)?;
    for _ in 0..warmup + 1 {
        agent.step(env.as_mut())?;
    }
    Ok((agent, env))
}
