//! Squashed-Gaussian policy with a dropout-equipped feature encoder.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approximator::primitives::{gaussian_log_density, tanh_log_jacobian};
use crate::approximator::{Activation, GradientSet, Matrix, Mlp, Tape};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Encoder `e` (with dropout) followed by linear mean and log-std heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub encoder: Mlp,
    pub mu_head: Mlp,
    pub logstd_head: Mlp,
    action_dim: usize,
}

/// Pre-squash diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::shape("mu and sigma lengths differ"));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Argument("sigma must be positive".into()));
        }
        Ok(ActionDistribution { mu, sigma })
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s.ln()).collect()
    }
}

/// A squashed action together with the pre-squash sample that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledAction {
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
}

/// Forward pass of the policy over a batch, retained for backpropagation.
pub struct PolicyTape {
    pub encoder: Tape,
    pub mu: Tape,
    pub logstd: Tape,
    /// Head output before clamping.
    pub raw_logstd: Matrix,
    /// Clamped log standard deviations.
    pub log_std: Matrix,
}

impl PolicyTape {
    pub fn mu(&self) -> &Matrix {
        self.mu.output()
    }
}

pub struct PolicyGradients {
    pub encoder: GradientSet,
    pub mu_head: GradientSet,
    pub logstd_head: GradientSet,
}

pub fn clamp_log_std(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

impl GaussianPolicy {
    /// `hidden` lists encoder hidden widths; the encoder emits `feature_dim`
    /// features that both heads consume.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(feature_dim);
        let encoder = Mlp::new(&sizes, Activation::Relu, dropout, rng)?;
        let mu_head = Mlp::new(&[feature_dim, action_dim], Activation::Relu, 0.0, rng)?;
        let logstd_head = Mlp::new(&[feature_dim, action_dim], Activation::Relu, 0.0, rng)?;
        Self::from_parts(encoder, mu_head, logstd_head)
    }

    pub fn from_parts(encoder: Mlp, mu_head: Mlp, logstd_head: Mlp) -> Result<Self> {
        let d = encoder.output_dim();
        if mu_head.input_dim() != d || logstd_head.input_dim() != d {
            return Err(Error::shape("policy heads must consume the encoder features"));
        }
        if mu_head.output_dim() != logstd_head.output_dim() {
            return Err(Error::shape("mu and log-std heads disagree on action size"));
        }
        if mu_head.has_dropout() || logstd_head.has_dropout() {
            return Err(Error::Argument("policy heads carry no dropout".into()));
        }
        let action_dim = mu_head.output_dim();
        Ok(GaussianPolicy {
            encoder,
            mu_head,
            logstd_head,
            action_dim,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Action distribution from a deterministic (dropout-free) encoder pass.
    pub fn distribution(&self, state: &[f64]) -> Result<ActionDistribution> {
        let features = self.encoder.forward(state, None)?;
        let mu = self.mu_head.forward(&features, None)?;
        let raw = self.logstd_head.forward(&features, None)?;
        let sigma = raw.iter().map(|&v| clamp_log_std(v).exp()).collect();
        Ok(ActionDistribution { mu, sigma })
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], mode: ActMode, rng: &mut R) -> Result<SampledAction> {
        let dist = self.distribution(state)?;
        Ok(sample_squashed(&dist, mode, rng))
    }

    pub fn forward_tape(&self, states: &Matrix) -> Result<PolicyTape> {
        let encoder = self.encoder.forward_tape(states, None)?;
        let mu = self.mu_head.forward_tape(encoder.output(), None)?;
        let logstd = self.logstd_head.forward_tape(encoder.output(), None)?;
        let raw_logstd = logstd.output().clone();
        let mut log_std = raw_logstd.clone();
        log_std.as_mut_slice().iter_mut().for_each(|v| *v = clamp_log_std(*v));
        Ok(PolicyTape {
            encoder,
            mu,
            logstd,
            raw_logstd,
            log_std,
        })
    }

    /// Backpropagates gradients with respect to the mean and the clamped
    /// log-std. The clamp passes gradient only strictly inside its bounds.
    pub fn backward(&self, tape: &PolicyTape, grad_mu: &Matrix, grad_log_std: &Matrix) -> Result<PolicyGradients> {
        let mut grad_raw = grad_log_std.clone();
        for (g, raw) in grad_raw.as_mut_slice().iter_mut().zip(tape.raw_logstd.as_slice()) {
            if !(LOG_STD_MIN < *raw && *raw < LOG_STD_MAX) {
                *g = 0.0;
            }
        }
        let (mu_g, mu_in) = self.mu_head.backward(&tape.mu, grad_mu, true)?;
        let (ls_g, ls_in) = self.logstd_head.backward(&tape.logstd, &grad_raw, true)?;
        let mut grad_features = mu_in;
        grad_features
            .as_mut_slice()
            .iter_mut()
            .zip(ls_in.as_slice())
            .for_each(|(a, b)| *a += b);
        let (enc_g, _) = self.encoder.backward(&tape.encoder, &grad_features, true)?;
        Ok(PolicyGradients {
            encoder: enc_g.expect("requested"),
            mu_head: mu_g.expect("requested"),
            logstd_head: ls_g.expect("requested"),
        })
    }
}

/// `tanh(mu + sigma·z)` with `z ~ N(0, I)`, or `tanh(mu)` deterministically.
pub fn sample_squashed<R: Rng + ?Sized>(dist: &ActionDistribution, mode: ActMode, rng: &mut R) -> SampledAction {
    let pre_squash: Vec<f64> = match mode {
        ActMode::Deterministic => dist.mu.clone(),
        ActMode::Stochastic => dist
            .mu
            .iter()
            .zip(&dist.sigma)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect(),
    };
    let action = pre_squash.iter().map(|u| squash(*u)).collect();
    SampledAction { action, pre_squash }
}

/// tanh kept strictly inside (−1, 1) so saturated actions stay legal.
pub fn squash(u: f64) -> f64 {
    let bound = 1.0 - f64::EPSILON;
    u.tanh().clamp(-bound, bound)
}

/// Log-density of the squashed action `tanh(u)` under `dist`.
pub fn log_prob(dist: &ActionDistribution, pre_squash: &[f64]) -> f64 {
    let log_std = dist.log_std();
    gaussian_log_density(pre_squash, &dist.mu, &log_std) - tanh_log_jacobian(pre_squash)
}

/// Closed-form `KL(p ‖ q)` between diagonal Gaussians.
pub fn kl_divergence(p: &ActionDistribution, q: &ActionDistribution) -> f64 {
    p.mu.iter()
        .zip(&p.sigma)
        .zip(q.mu.iter().zip(&q.sigma))
        .map(|((&mp, &sp), (&mq, &sq))| kl_term(mp, sp.ln(), mq, sq.ln()))
        .sum()
}

/// One dimension of the Gaussian KL, parameterised by log standard deviations.
pub fn kl_term(mu_p: f64, log_std_p: f64, mu_q: f64, log_std_q: f64) -> f64 {
    let var_ratio = (2.0 * (log_std_p - log_std_q)).exp();
    let d = mu_p - mu_q;
    let var_q = (2.0 * log_std_q).exp();
    log_std_q - log_std_p + 0.5 * (var_ratio + d * d / var_q) - 0.5
}

/// `(∂/∂mu_p, ∂/∂log_std_p)` of [`kl_term`].
pub fn kl_term_gradient(mu_p: f64, log_std_p: f64, mu_q: f64, log_std_q: f64) -> (f64, f64) {
    let var_q = (2.0 * log_std_q).exp();
    let var_ratio = (2.0 * (log_std_p - log_std_q)).exp();
    ((mu_p - mu_q) / var_q, var_ratio - 1.0)
}
