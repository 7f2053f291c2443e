use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::replay::Batch;
use super::reward::RewardMode;
use crate::approximator::primitives::{half_squared_error, min2, tanh_log_jacobian_derivative, LN_2PI, TANH_EPS};
use crate::approximator::{adam_step_in_place, Activation, AdamState, Matrix, Mlp};
use crate::error::{Error, Result};
use crate::policy::{kl_term, kl_term_gradient, squash, GaussianPolicy};
use crate::uncertainty::UncertaintyTracker;

/// Hyperparameters of the soft actor-critic learner and its reward switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Fixed entropy coefficient.
    pub alpha: f64,
    /// Weight of the auxiliary reward.
    pub lambda: f64,
    /// Own-criterion threshold on the uncertainty distance.
    pub epsilon: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Dropout passes per uncertainty estimate.
    pub n_passes: usize,
    /// Uncertainty-weighted KL consolidation toward the frozen policy.
    pub upc: bool,
    pub reward_mode: RewardMode,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub dropout: f64,
    pub buffer_capacity: usize,
    /// Uniform-random actions for this many initial steps of a fresh agent.
    pub warmup_steps: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            tau: 0.005,
            alpha: 0.2,
            lambda: 1.0,
            epsilon: 0.5,
            lr: 1e-3,
            batch_size: 64,
            n_passes: 10,
            upc: false,
            reward_mode: RewardMode::EnvOnly,
            hidden: vec![64, 64],
            feature_dim: 64,
            dropout: 0.1,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.n_passes < 2 {
            return bad("n_passes must be at least 2");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.feature_dim == 0 {
            return bad("network widths must be positive and at least one hidden layer is required");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizer {
    pub encoder: AdamState,
    pub mu_head: AdamState,
    pub logstd_head: AdamState,
}

/// Everything the learner updates, plus the frozen reference policy.
#[derive(Clone, Debug, PartialEq)]
pub struct SacState {
    pub policy: GaussianPolicy,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub policy_opt: PolicyOptimizer,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    original_policy: Option<GaussianPolicy>,
    pub tracker: UncertaintyTracker,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStats {
    pub loss1: f64,
    pub loss2: f64,
}

/// Mean terms of the policy objective over a batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyStats {
    pub loss: f64,
    pub log_prob: f64,
    pub min_q: f64,
    /// Mean of `(1 − d_u)·KL`, zero when consolidation is off.
    pub consolidation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic: CriticStats,
    pub policy: PolicyStats,
}

/// Reparameterised action samples for a batch of distributions.
pub(crate) struct Reparam {
    pub pre_squash: Matrix,
    pub actions: Matrix,
    pub log_prob: Vec<f64>,
}

pub(crate) fn reparameterize(mu: &Matrix, log_std: &Matrix, noise: &Matrix) -> Reparam {
    let (n, k) = (mu.rows(), mu.cols());
    let mut pre = Matrix::zeros(n, k);
    let mut act = Matrix::zeros(n, k);
    let mut log_prob = vec![0.0; n];
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..k {
            let ls = log_std.get(i, j);
            let z = noise.get(i, j);
            let u = mu.get(i, j) + ls.exp() * z;
            let t = u.tanh();
            pre.set(i, j, u);
            act.set(i, j, squash(u));
            lp += -0.5 * z * z - ls - 0.5 * LN_2PI - (1.0 - t * t + TANH_EPS).ln();
        }
        log_prob[i] = lp;
    }
    Reparam {
        pre_squash: pre,
        actions: act,
        log_prob,
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn critic_net<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Mlp> {
    let mut sizes = vec![obs_dim + action_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::new(&sizes, Activation::Relu, 0.0, rng)
}

impl SacState {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &LearnerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let policy = GaussianPolicy::new(obs_dim, action_dim, &cfg.hidden, cfg.feature_dim, cfg.dropout, rng)?;
        let critic1 = critic_net(obs_dim, action_dim, &cfg.hidden, rng)?;
        let critic2 = critic_net(obs_dim, action_dim, &cfg.hidden, rng)?;
        Self::from_parts(policy, critic1.clone(), critic2.clone(), critic1, critic2, None)
    }

    /// Assembles a state with fresh optimizer moments.
    pub fn from_parts(
        policy: GaussianPolicy,
        critic1: Mlp,
        critic2: Mlp,
        target1: Mlp,
        target2: Mlp,
        tracker: Option<UncertaintyTracker>,
    ) -> Result<Self> {
        if !critic1.same_shape(&target1) || !critic2.same_shape(&target2) || !critic1.same_shape(&critic2) {
            return Err(Error::shape("critics and targets must share one architecture"));
        }
        if critic1.input_dim() != policy.obs_dim() + policy.action_dim() || critic1.output_dim() != 1 {
            return Err(Error::shape("critics must map (state, action) to a scalar"));
        }
        let policy_opt = PolicyOptimizer {
            encoder: AdamState::new(&policy.encoder),
            mu_head: AdamState::new(&policy.mu_head),
            logstd_head: AdamState::new(&policy.logstd_head),
        };
        let tracker = tracker.unwrap_or_else(|| UncertaintyTracker::new(policy.feature_dim()));
        if tracker.dim() != policy.feature_dim() {
            return Err(Error::shape("tracker dimension must equal the encoder feature width"));
        }
        Ok(SacState {
            critic1_opt: AdamState::new(&critic1),
            critic2_opt: AdamState::new(&critic2),
            policy,
            critic1,
            critic2,
            target1,
            target2,
            policy_opt,
            original_policy: None,
            tracker,
        })
    }

    pub fn original_policy(&self) -> Option<&GaussianPolicy> {
        self.original_policy.as_ref()
    }

    /// Freezes `policy` as the consolidation anchor. It can be set only once.
    pub fn set_original_policy(&mut self, policy: GaussianPolicy) -> Result<()> {
        if self.original_policy.is_some() {
            return Err(Error::State("the original policy is already frozen".into()));
        }
        if policy.obs_dim() != self.policy.obs_dim() || policy.action_dim() != self.policy.action_dim() {
            return Err(Error::shape("original policy does not match the learner's spaces"));
        }
        self.original_policy = Some(policy);
        Ok(())
    }

    fn critic_inputs(states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        states.hcat(actions)
    }

    /// Soft Bellman targets `r + γ(1−done)(min Q̄(s', a') − α log π(a'|s'))`
    /// using the supplied next-action noise.
    pub fn critic_targets(&self, batch: &Batch, cfg: &LearnerConfig, noise: &Matrix) -> Result<Vec<f64>> {
        let tape = self.policy.forward_tape(&batch.next_states)?;
        let sample = reparameterize(tape.mu(), &tape.log_std, noise);
        let inputs = Self::critic_inputs(&batch.next_states, &sample.actions)?;
        let q1 = self.target1.forward_batch(&inputs, None)?;
        let q2 = self.target2.forward_batch(&inputs, None)?;
        Ok((0..batch.len())
            .map(|i| {
                let (q, _) = min2(q1.get(i, 0), q2.get(i, 0));
                let bootstrap = if batch.dones[i] { 0.0 } else { 1.0 };
                batch.rewards[i] + cfg.gamma * bootstrap * (q - cfg.alpha * sample.log_prob[i])
            })
            .collect())
    }

    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, cfg: &LearnerConfig, rng: &mut R) -> Result<CriticStats> {
        let noise = standard_normal(batch.len(), self.policy.action_dim(), rng);
        self.critic_update_with_noise(batch, cfg, &noise)
    }

    pub fn critic_update_with_noise(&mut self, batch: &Batch, cfg: &LearnerConfig, noise: &Matrix) -> Result<CriticStats> {
        if batch.is_empty() {
            return Err(Error::Argument("critic update needs a nonempty batch".into()));
        }
        let y = Matrix::from_vec(batch.len(), 1, self.critic_targets(batch, cfg, noise)?)?;
        let inputs = Self::critic_inputs(&batch.states, &batch.actions)?;
        let mut losses = [0.0; 2];
        for (k, (critic, opt)) in [(&mut self.critic1, &mut self.critic1_opt), (&mut self.critic2, &mut self.critic2_opt)]
            .into_iter()
            .enumerate()
        {
            let (loss, grads) = crate::approximator::gradients(critic, &inputs, None, |q| half_squared_error(q, &y))?;
            adam_step_in_place(critic, &grads, opt, cfg.lr)?;
            losses[k] = loss;
        }
        Ok(CriticStats {
            loss1: losses[0],
            loss2: losses[1],
        })
    }

    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch, cfg: &LearnerConfig, rng: &mut R) -> Result<PolicyStats> {
        let noise = standard_normal(batch.len(), self.policy.action_dim(), rng);
        self.policy_update_with_noise(batch, cfg, &noise)
    }

    pub fn policy_update_with_noise(&mut self, batch: &Batch, cfg: &LearnerConfig, noise: &Matrix) -> Result<PolicyStats> {
        let (stats, grads) = self.policy_objective(&batch.states, &batch.d_u, cfg, noise)?;
        let opt = &mut self.policy_opt;
        adam_step_in_place(&mut self.policy.encoder, &grads.encoder, &mut opt.encoder, cfg.lr)?;
        adam_step_in_place(&mut self.policy.mu_head, &grads.mu_head, &mut opt.mu_head, cfg.lr)?;
        adam_step_in_place(&mut self.policy.logstd_head, &grads.logstd_head, &mut opt.logstd_head, cfg.lr)?;
        Ok(stats)
    }

    /// Value and policy-parameter gradient of
    /// `mean[α log π(a|s) − min Q(s, a) + (1 − d_u)·KL(π ‖ π_org)]`
    /// for reparameterised actions `a = tanh(μ + σ·noise)`.
    pub fn policy_objective(
        &self,
        states: &Matrix,
        d_u: &[f64],
        cfg: &LearnerConfig,
        noise: &Matrix,
    ) -> Result<(PolicyStats, crate::policy::PolicyGradients)> {
        let n = states.rows();
        if n == 0 || d_u.len() != n {
            return Err(Error::shape("policy objective needs one d_u per state"));
        }
        let original = match (cfg.upc, &self.original_policy) {
            (true, None) => {
                return Err(Error::Config(
                    "consolidation is enabled but no original policy is frozen".into(),
                ))
            }
            (true, Some(p)) => Some(p.forward_tape(states)?),
            (false, _) => None,
        };
        let k = self.policy.action_dim();
        let tape = self.policy.forward_tape(states)?;
        let sample = reparameterize(tape.mu(), &tape.log_std, noise);
        let inputs = Self::critic_inputs(states, &sample.actions)?;
        let t1 = self.critic1.forward_tape(&inputs, None)?;
        let t2 = self.critic2.forward_tape(&inputs, None)?;

        let inv_n = 1.0 / n as f64;
        let mut g1 = Matrix::zeros(n, 1);
        let mut g2 = Matrix::zeros(n, 1);
        let mut sum_q = 0.0;
        for i in 0..n {
            let (q, first) = min2(t1.output().get(i, 0), t2.output().get(i, 0));
            sum_q += q;
            if first {
                g1.set(i, 0, -inv_n);
            } else {
                g2.set(i, 0, -inv_n);
            }
        }
        let (_, gin1) = self.critic1.backward(&t1, &g1, false)?;
        let (_, gin2) = self.critic2.backward(&t2, &g2, false)?;
        let obs_dim = states.cols();

        let mut grad_mu = Matrix::zeros(n, k);
        let mut grad_ls = Matrix::zeros(n, k);
        let mut sum_kl = 0.0;
        for i in 0..n {
            let weight = 1.0 - d_u[i];
            for j in 0..k {
                let u = sample.pre_squash.get(i, j);
                let t = u.tanh();
                let ls = tape.log_std.get(i, j);
                let z = noise.get(i, j);
                let da = gin1.get(i, obs_dim + j) + gin2.get(i, obs_dim + j);
                let du = da * (1.0 - t * t) - cfg.alpha * inv_n * tanh_log_jacobian_derivative(u);
                let mut gm = du;
                let mut gl = du * ls.exp() * z - cfg.alpha * inv_n;
                if let Some(org) = &original {
                    let (mq, lq) = (org.mu().get(i, j), org.log_std.get(i, j));
                    let mp = tape.mu().get(i, j);
                    sum_kl += weight * kl_term(mp, ls, mq, lq);
                    let (dm, dl) = kl_term_gradient(mp, ls, mq, lq);
                    gm += weight * inv_n * dm;
                    gl += weight * inv_n * dl;
                }
                grad_mu.set(i, j, gm);
                grad_ls.set(i, j, gl);
            }
        }
        let grads = self.policy.backward(&tape, &grad_mu, &grad_ls)?;
        let log_prob = sample.log_prob.iter().sum::<f64>() * inv_n;
        let min_q = sum_q * inv_n;
        let consolidation = sum_kl * inv_n;
        let loss = cfg.alpha * log_prob - min_q + consolidation;
        if !loss.is_finite() {
            return Err(Error::numeric(0, "policy loss is not finite"));
        }
        Ok((
            PolicyStats {
                loss,
                log_prob,
                min_q,
                consolidation,
            },
            grads,
        ))
    }

    pub fn target_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Argument(format!("tau must lie in (0, 1], got {tau}")));
        }
        self.target1.blend_from(&self.critic1, tau);
        self.target2.blend_from(&self.critic2, tau);
        Ok(())
    }

    /// Critic step, policy step, then Polyak averaging.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, cfg: &LearnerConfig, rng: &mut R) -> Result<UpdateStats> {
        let critic = self.critic_update(batch, cfg, rng)?;
        let policy = self.policy_update(batch, cfg, rng)?;
        self.target_update(cfg.tau)?;
        Ok(UpdateStats { critic, policy })
    }
}
