//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, unknown keys are rejected, and [`RunConfig::render`] writes the
//! fully resolved form back out so a run can be repeated from its echo.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, Phase};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, RewardMode};

/// Retraining treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Auxiliary reward outside the training region plus consolidation.
    Sero,
    /// As `Sero`, with membership judged by the uncertainty threshold.
    SeroOc,
    /// Environment reward everywhere.
    SacEnv,
    /// Zero reward outside the training region.
    SacZero,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sero, Variant::SeroOc, Variant::SacEnv, Variant::SacZero];

    pub fn reward_mode(self) -> RewardMode {
        match self {
            Variant::Sero => RewardMode::AuxManual,
            Variant::SeroOc => RewardMode::AuxOwnCriterion,
            Variant::SacEnv => RewardMode::EnvOnly,
            Variant::SacZero => RewardMode::ZeroOod,
        }
    }

    pub fn uses_consolidation(self) -> bool {
        matches!(self, Variant::Sero | Variant::SeroOc)
    }

    fn name(self) -> &'static str {
        match self {
            Variant::Sero => "sero",
            Variant::SeroOc => "sero_oc",
            Variant::SacEnv => "sac_env",
            Variant::SacZero => "sac_zero",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvId,
    pub phase: Phase,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub learner: LearnerConfig,
    pub train_steps: u64,
    pub retrain_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
    /// Training checkpoint that retraining, evaluation and calibration start from.
    pub checkpoint: Option<PathBuf>,
    /// Switches consolidation off for the variants that normally use it.
    pub disable_upc: bool,
    /// Rebuild the uncertainty maxima with the final encoder over a replay
    /// sample before the training checkpoint is written.
    pub recalibrate_sigma_max: bool,
    pub recalibration_samples: usize,
    pub calibration_episodes: usize,
    pub calibration_quantile: f64,
    pub calibration_margin: f64,
    /// Consecutive in-distribution steps that count as a sustained return.
    pub sustain_steps: usize,
    /// Write elapsed seconds into the metrics; off keeps runs byte-identical.
    pub wall_clock: bool,
}

impl RunConfig {
    /// Defaults for one environment: budgets and learner settings differ per task.
    pub fn for_env(env: EnvId) -> Self {
        let (train_steps, retrain_steps, lambda) = match env {
            EnvId::PointRoom => (60_000, 50_000, 5.0),
            EnvId::Pendulum => (150_000, 100_000, 1.0),
        };
        RunConfig {
            env,
            phase: Phase::Training,
            variant: Variant::Sero,
            seeds: vec![1],
            learner: LearnerConfig {
                lambda,
                ..LearnerConfig::default()
            },
            train_steps,
            retrain_steps,
            eval_interval: 2000,
            eval_episodes: 5,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            disable_upc: false,
            recalibrate_sigma_max: false,
            recalibration_samples: 5000,
            calibration_episodes: 20,
            calibration_quantile: 0.95,
            calibration_margin: 0.05,
            sustain_steps: 50,
            wall_clock: false,
        }
    }

    /// Learner settings for retraining under `self.variant`.
    pub fn retraining_learner(&self) -> LearnerConfig {
        let mut cfg = self.learner.clone();
        cfg.reward_mode = self.variant.reward_mode();
        cfg.upc = self.variant.uses_consolidation() && !self.disable_upc;
        cfg
    }

    /// Learner settings for the training phase.
    pub fn training_learner(&self) -> LearnerConfig {
        let mut cfg = self.learner.clone();
        cfg.reward_mode = RewardMode::EnvOnly;
        cfg.upc = false;
        cfg
    }

    pub fn budget(&self) -> u64 {
        match self.phase {
            Phase::Training => self.train_steps,
            Phase::Retraining => self.retrain_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if self.eval_episodes == 0 || self.calibration_episodes == 0 {
            return Err(Error::Config("episode counts must be positive".into()));
        }
        if !(self.calibration_quantile > 0.0 && self.calibration_quantile < 1.0) {
            return Err(Error::Config("calibration_quantile must lie in (0, 1)".into()));
        }
        if !self.calibration_margin.is_finite() {
            return Err(Error::Config("calibration_margin must be finite".into()));
        }
        if self.recalibrate_sigma_max && self.recalibration_samples == 0 {
            return Err(Error::Config("recalibration needs at least one sample".into()));
        }
        if self.sustain_steps == 0 {
            return Err(Error::Config("sustain_steps must be positive".into()));
        }
        Ok(())
    }

    /// Parses a config document. The `env` key, wherever it appears, picks
    /// the defaults the remaining keys override.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let env = match pairs.iter().rev().find(|(k, _)| k == "env") {
            Some((_, v)) => v.parse()?,
            None => EnvId::PointRoom,
        };
        let mut cfg = RunConfig::for_env(env);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Values are validated as a whole by [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let l = &mut self.learner;
        match key {
            "env" => self.env = value.parse()?,
            "phase" => self.phase = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "retrain_steps" => self.retrain_steps = num(key, value)?,
            "eval_interval" => self.eval_interval = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value)),
            "disable_upc" => self.disable_upc = num(key, value)?,
            "recalibrate_sigma_max" => self.recalibrate_sigma_max = num(key, value)?,
            "recalibration_samples" => self.recalibration_samples = num(key, value)?,
            "calibration_episodes" => self.calibration_episodes = num(key, value)?,
            "calibration_quantile" => self.calibration_quantile = num(key, value)?,
            "calibration_margin" => self.calibration_margin = num(key, value)?,
            "sustain_steps" => self.sustain_steps = num(key, value)?,
            "wall_clock" => self.wall_clock = num(key, value)?,
            "gamma" => l.gamma = num(key, value)?,
            "tau" => l.tau = num(key, value)?,
            "alpha" => l.alpha = num(key, value)?,
            "lambda" => l.lambda = num(key, value)?,
            "epsilon" => l.epsilon = num(key, value)?,
            "lr" => l.lr = num(key, value)?,
            "batch_size" => l.batch_size = num(key, value)?,
            "n_passes" => l.n_passes = num(key, value)?,
            "hidden" => l.hidden = parse_list(key, value)?,
            "feature_dim" => l.feature_dim = num(key, value)?,
            "dropout" => l.dropout = num(key, value)?,
            "buffer_capacity" => l.buffer_capacity = num(key, value)?,
            "warmup_steps" => l.warmup_steps = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Resolved config, one key per line, in a fixed order.
    pub fn render(&self) -> String {
        let l = &self.learner;
        let join = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let checkpoint = self.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let lines = [
            ("env", self.env.to_string()),
            ("phase", self.phase.to_string()),
            ("variant", self.variant.to_string()),
            ("seeds", seeds),
            ("train_steps", self.train_steps.to_string()),
            ("retrain_steps", self.retrain_steps.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("checkpoint", checkpoint),
            ("disable_upc", self.disable_upc.to_string()),
            ("recalibrate_sigma_max", self.recalibrate_sigma_max.to_string()),
            ("recalibration_samples", self.recalibration_samples.to_string()),
            ("calibration_episodes", self.calibration_episodes.to_string()),
            ("calibration_quantile", self.calibration_quantile.to_string()),
            ("calibration_margin", self.calibration_margin.to_string()),
            ("sustain_steps", self.sustain_steps.to_string()),
            ("wall_clock", self.wall_clock.to_string()),
            ("gamma", l.gamma.to_string()),
            ("tau", l.tau.to_string()),
            ("alpha", l.alpha.to_string()),
            ("lambda", l.lambda.to_string()),
            ("epsilon", l.epsilon.to_string()),
            ("lr", l.lr.to_string()),
            ("batch_size", l.batch_size.to_string()),
            ("n_passes", l.n_passes.to_string()),
            ("hidden", join(&l.hidden)),
            ("feature_dim", l.feature_dim.to_string()),
            ("dropout", l.dropout.to_string()),
            ("buffer_capacity", l.buffer_capacity.to_string()),
            ("warmup_steps", l.warmup_steps.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Splits a config document into its `(key, value)` pairs, in order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for key `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}
