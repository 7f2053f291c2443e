//! Training phase, freeze, retraining phase and the evaluations around them.

use std::path::Path;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use crate::approximator::Mlp;
use crate::envs::{make_env, Environment, Phase};
use crate::error::{Error, Result};
use crate::learner::{Agent, SacState};
use crate::policy::{kl_divergence, ActMode, GaussianPolicy};
use crate::uncertainty::{mc_uncertainty, UncertaintyTracker};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";

const INIT_STREAM: u64 = 3;
const RECALIBRATION_STREAM: u64 = 4;
const EVAL_ENV_STREAMS: u64 = 1 << 32;
const EVAL_MC_STREAMS: u64 = 2 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Encoder and maxima used to measure uncertainty during evaluation.
#[derive(Clone, Copy)]
pub struct UncertaintyProbe<'a> {
    pub encoder: &'a Mlp,
    pub tracker: &'a UncertaintyTracker,
    pub n_passes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub raw_return: f64,
    pub zeroed_return: f64,
    pub steps: usize,
    pub in_dist_steps: usize,
    /// Longest run of consecutive in-distribution states.
    pub longest_streak: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: Vec<EpisodeStats>,
    pub mean_raw: f64,
    pub mean_zeroed: f64,
    /// Sample standard deviations across episodes (0 for a single episode).
    pub std_raw: f64,
    pub std_zeroed: f64,
    pub mean_du: Option<f64>,
    pub in_dist_frac: f64,
    /// Mean divergence from the original policy over in-distribution states.
    pub kl_to_org: Option<f64>,
}

impl EvalSummary {
    pub fn longest_streak(&self) -> usize {
        self.episodes.iter().map(|e| e.longest_streak).max().unwrap_or(0)
    }

    fn row(&self, step: u64, seconds: f64) -> MetricsRow {
        MetricsRow {
            step,
            raw_return: self.mean_raw,
            zeroed_return: self.mean_zeroed,
            mean_du: self.mean_du,
            in_dist_frac: self.in_dist_frac,
            kl_to_org: self.kl_to_org,
            seconds,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 below two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Runs `episodes` episodes with deterministic actions. The zeroed return
/// keeps the environment reward only for steps taken from an
/// in-distribution state. Uncertainty is measured on every visited state
/// when a probe with initialized maxima is given; the tracker is not updated.
pub fn evaluate(
    policy: &GaussianPolicy,
    probe: Option<UncertaintyProbe<'_>>,
    original: Option<&GaussianPolicy>,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    step: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Argument("evaluation needs at least one episode".into()));
    }
    let probe = probe.filter(|p| p.tracker.is_initialized());
    let mut env_rng = stream(seed, EVAL_ENV_STREAMS.wrapping_add(step));
    let mut mc_rng = stream(seed, EVAL_MC_STREAMS.wrapping_add(step));
    let mut stats = Vec::with_capacity(episodes);
    let (mut du_sum, mut du_n) = (0.0, 0usize);
    let (mut kl_sum, mut kl_n) = (0.0, 0usize);
    for _ in 0..episodes {
        let mut obs = env.reset(&mut env_rng);
        let mut inside = env.in_distribution();
        let mut ep = EpisodeStats {
            raw_return: 0.0,
            zeroed_return: 0.0,
            steps: 0,
            in_dist_steps: 0,
            longest_streak: 0,
        };
        let mut streak = 0;
        loop {
            if let Some(p) = probe {
                let sigma = mc_uncertainty(p.encoder, &obs, p.n_passes, &mut mc_rng)?;
                du_sum += p.tracker.distance(&sigma)?;
                du_n += 1;
            }
            if inside {
                ep.in_dist_steps += 1;
                streak += 1;
                ep.longest_streak = ep.longest_streak.max(streak);
                if let Some(org) = original {
                    kl_sum += kl_divergence(&policy.distribution(&obs)?, &org.distribution(&obs)?);
                    kl_n += 1;
                }
            } else {
                streak = 0;
            }
            let action = policy.act(&obs, ActMode::Deterministic, &mut mc_rng)?.action;
            let result = env.step(&action)?;
            ep.raw_return += result.env_reward;
            if inside {
                ep.zeroed_return += result.env_reward;
            }
            ep.steps += 1;
            if result.terminated || result.truncated {
                break;
            }
            obs = result.observation;
            inside = result.in_distribution;
        }
        stats.push(ep);
    }
    let raw: Vec<f64> = stats.iter().map(|e| e.raw_return).collect();
    let zeroed: Vec<f64> = stats.iter().map(|e| e.zeroed_return).collect();
    let total_steps: usize = stats.iter().map(|e| e.steps).sum();
    let inside_steps: usize = stats.iter().map(|e| e.in_dist_steps).sum();
    Ok(EvalSummary {
        mean_raw: mean(&raw),
        mean_zeroed: mean(&zeroed),
        std_raw: sample_std(&raw),
        std_zeroed: sample_std(&zeroed),
        mean_du: (du_n > 0).then(|| du_sum / du_n as f64),
        in_dist_frac: inside_steps as f64 / total_steps as f64,
        kl_to_org: (kl_n > 0).then(|| kl_sum / kl_n as f64),
        episodes: stats,
    })
}

/// Evaluates a checkpoint in the requested phase of its environment, with
/// uncertainty measured by the checkpoint's own encoder and maxima.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, phase: Phase, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let policy = ckpt.policy()?;
    let tracker = ckpt.tracker()?;
    let probe = UncertaintyProbe {
        encoder: &policy.encoder,
        tracker: &tracker,
        n_passes: ckpt.config.n_passes,
    };
    let mut env = make_env(ckpt.env, phase);
    evaluate(&policy, Some(probe), None, env.as_mut(), episodes, seed, ckpt.step)
}

/// Linear-interpolation quantile of `values` (need not be sorted).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::State("no values to take a quantile of".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub const EPSILON_FLOOR: f64 = 1e-6;
pub const EPSILON_CEIL: f64 = 1.0 - 1e-6;

/// Threshold from observed in-distribution distances: quantile plus margin,
/// kept strictly inside (0, 1).
pub fn epsilon_from_distances(distances: &[f64], q: f64, margin: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Argument(format!("quantile {q} outside (0, 1)")));
    }
    Ok((quantile(distances, q)? + margin).clamp(EPSILON_FLOOR, EPSILON_CEIL))
}

/// Distances of the in-distribution states visited by the checkpoint's
/// deterministic policy in the training variant of its environment.
pub fn in_distribution_distances(ckpt: &Checkpoint, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let policy = ckpt.policy()?;
    let tracker = ckpt.tracker()?;
    if !tracker.is_initialized() {
        return Err(Error::State("checkpoint has no uncertainty maxima".into()));
    }
    let mut env = make_env(ckpt.env, Phase::Training);
    let mut env_rng = stream(seed, EVAL_ENV_STREAMS);
    let mut mc_rng = stream(seed, EVAL_MC_STREAMS);
    let mut out = Vec::new();
    for _ in 0..episodes {
        let mut obs = env.reset(&mut env_rng);
        let mut inside = env.in_distribution();
        loop {
            if inside {
                let sigma = mc_uncertainty(&policy.encoder, &obs, ckpt.config.n_passes, &mut mc_rng)?;
                out.push(tracker.distance(&sigma)?);
            }
            let action = policy.act(&obs, ActMode::Deterministic, &mut mc_rng)?.action;
            let result = env.step(&action)?;
            if result.terminated || result.truncated {
                break;
            }
            obs = result.observation;
            inside = result.in_distribution;
        }
    }
    Ok(out)
}

/// Own-criterion threshold for a trained checkpoint.
pub fn calibrate_epsilon(ckpt: &Checkpoint, episodes: usize, q: f64, margin: f64, seed: u64) -> Result<f64> {
    let distances = in_distribution_distances(ckpt, episodes, seed)?;
    if distances.is_empty() {
        return Err(Error::State("calibration rollouts visited no in-distribution state".into()));
    }
    epsilon_from_distances(&distances, q, margin)
}

fn open_metrics(out: Option<&Path>) -> Result<Option<MetricsWriter>> {
    out.map(|dir| MetricsWriter::create(&dir.join(METRICS_FILE))).transpose()
}

struct Recorder {
    writer: Option<MetricsWriter>,
    rows: Vec<MetricsRow>,
    clock: Option<Instant>,
}

impl Recorder {
    fn new(out: Option<&Path>, wall_clock: bool) -> Result<Self> {
        Ok(Recorder {
            writer: open_metrics(out)?,
            rows: Vec::new(),
            clock: wall_clock.then(Instant::now),
        })
    }

    fn record(&mut self, summary: &EvalSummary, step: u64) -> Result<()> {
        let seconds = self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64());
        let row = summary.row(step, seconds);
        if let Some(w) = self.writer.as_mut() {
            w.append(&row)?;
        }
        self.rows.push(row);
        Ok(())
    }
}

pub struct TrainingOutcome {
    pub checkpoint: Checkpoint,
    pub rows: Vec<MetricsRow>,
}

/// Trains from scratch on the training variant. With `out` set, metrics are
/// appended to `out/metrics.csv` as they are produced and the final
/// checkpoint lands in `out/checkpoint.json`. A numeric failure writes the
/// checkpoint of the last evaluation point instead and returns the error.
pub fn run_training_phase(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let lcfg = cfg.training_learner();
    let mut env = make_env(cfg.env, Phase::Training);
    let mut eval_env = make_env(cfg.env, Phase::Training);
    let sac = SacState::new(env.obs_dim(), env.action_dim(), &lcfg, &mut stream(seed, INIT_STREAM))?;
    let mut agent = Agent::new(sac, lcfg.clone(), Phase::Training, seed, true)?;
    let mut recorder = Recorder::new(out, cfg.wall_clock)?;
    let snapshot = |agent: &Agent, step: u64| {
        Checkpoint::capture(&agent.sac, &lcfg, cfg.env, Phase::Training, step, agent.rng_streams())
    };
    let mut last_good = snapshot(&agent, 0);
    let result = (|| -> Result<()> {
        for step in 0..=cfg.train_steps {
            if step % cfg.eval_interval == 0 {
                let policy = &agent.sac.policy;
                let probe = UncertaintyProbe {
                    encoder: &policy.encoder,
                    tracker: &agent.sac.tracker,
                    n_passes: lcfg.n_passes,
                };
                let summary = evaluate(policy, Some(probe), None, eval_env.as_mut(), cfg.eval_episodes, seed, step)?;
                recorder.record(&summary, step)?;
                last_good = snapshot(&agent, step);
            }
            if step < cfg.train_steps {
                agent.step(env.as_mut())?;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        if let Some(dir) = out {
            last_good.save(&dir.join(CHECKPOINT_FILE))?;
        }
        return Err(e);
    }
    if cfg.recalibrate_sigma_max && !agent.replay.is_empty() {
        let mut rng = stream(seed, RECALIBRATION_STREAM);
        let states: Vec<&[f64]> = agent.replay.iter().map(|t| t.state.as_slice()).collect();
        let mut tracker = UncertaintyTracker::new(agent.sac.tracker.dim());
        for _ in 0..cfg.recalibration_samples {
            let s = states.choose(&mut rng).expect("non-empty replay");
            tracker.update(&mc_uncertainty(&agent.sac.policy.encoder, s, lcfg.n_passes, &mut rng)?)?;
        }
        agent.sac.tracker = tracker;
    }
    let checkpoint = snapshot(&agent, cfg.train_steps);
    if let Some(dir) = out {
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(TrainingOutcome {
        checkpoint,
        rows: recorder.rows,
    })
}

pub struct RetrainingOutcome {
    pub rows: Vec<MetricsRow>,
    pub sac: SacState,
    /// Collection step at which an in-distribution state was first reached.
    pub first_in_dist_step: Option<u64>,
    /// Collection step at which an episode first stayed in-distribution for
    /// `sustain_steps` consecutive states.
    pub first_sustained_step: Option<u64>,
    /// Longest in-distribution run seen in any evaluation episode.
    pub eval_longest_streak: usize,
}

/// Learner for the retraining phase: the checkpoint's networks and maxima,
/// fresh optimizers and replay buffer, the checkpoint policy frozen as the
/// original policy, and no random warmup.
pub fn retraining_agent(cfg: &RunConfig, ckpt: &Checkpoint, seed: u64) -> Result<Agent> {
    cfg.validate()?;
    if ckpt.env != cfg.env {
        return Err(Error::Config(format!(
            "checkpoint was trained on {} but the run targets {}",
            ckpt.env, cfg.env
        )));
    }
    if ckpt.phase != Phase::Training {
        return Err(Error::Config("retraining starts from a training-phase checkpoint".into()));
    }
    if ckpt.tracker.sigma_max.is_none() {
        return Err(Error::Config("checkpoint has no uncertainty maxima to retrain against".into()));
    }
    let mut lcfg = cfg.retraining_learner();
    lcfg.warmup_steps = 0;
    if lcfg.hidden != ckpt.config.hidden
        || lcfg.feature_dim != ckpt.config.feature_dim
        || lcfg.dropout != ckpt.config.dropout
    {
        return Err(Error::Config("network settings differ from the checkpoint".into()));
    }
    let mut sac = ckpt.sac_state()?;
    sac.set_original_policy(ckpt.policy()?)?;
    Agent::new(sac, lcfg, Phase::Retraining, seed, true)
}

/// Retrains a training checkpoint on the retraining variant under
/// `cfg.variant`; see [`retraining_agent`] for the starting state.
pub fn run_retraining_phase(
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    seed: u64,
    out: Option<&Path>,
) -> Result<RetrainingOutcome> {
    let mut agent = retraining_agent(cfg, ckpt, seed)?;
    let n_passes = agent.cfg.n_passes;
    let mut env = make_env(cfg.env, Phase::Retraining);
    let mut eval_env = make_env(cfg.env, Phase::Retraining);
    let mut recorder = Recorder::new(out, cfg.wall_clock)?;
    let mut first_in_dist_step = None;
    let mut first_sustained_step = None;
    let mut eval_longest_streak = 0;
    let mut streak = 0usize;
    for step in 0..=cfg.retrain_steps {
        if step % cfg.eval_interval == 0 {
            let original = agent.sac.original_policy().expect("frozen above");
            let probe = UncertaintyProbe {
                encoder: &original.encoder,
                tracker: &agent.sac.tracker,
                n_passes,
            };
            let summary = evaluate(
                &agent.sac.policy,
                Some(probe),
                Some(original),
                eval_env.as_mut(),
                cfg.eval_episodes,
                seed,
                step,
            )?;
            eval_longest_streak = eval_longest_streak.max(summary.longest_streak());
            recorder.record(&summary, step)?;
        }
        if step == cfg.retrain_steps {
            break;
        }
        let (record, _) = agent.step(env.as_mut())?;
        let t = &record.transition;
        if t.in_dist_next {
            streak += 1;
            first_in_dist_step.get_or_insert(step + 1);
            if streak >= cfg.sustain_steps {
                first_sustained_step.get_or_insert(step + 1);
            }
        } else {
            streak = 0;
        }
        if record.episode_ended() {
            streak = 0;
        }
    }
    Ok(RetrainingOutcome {
        rows: recorder.rows,
        sac: agent.sac,
        first_in_dist_step,
        first_sustained_step,
        eval_longest_streak,
    })
}
