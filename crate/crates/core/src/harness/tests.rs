use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};

use super::*;
use crate::envs::{make_env, EnvId, Environment, Phase, StepResult};
use crate::error::{Error, Result};
use crate::learner::RewardMode;
use crate::policy::GaussianPolicy;

fn tiny(env: EnvId) -> RunConfig {
    let mut cfg = RunConfig::for_env(env);
    cfg.learner.hidden = vec![8];
    cfg.learner.feature_dim = 6;
    cfg.learner.batch_size = 16;
    cfg.learner.warmup_steps = 100;
    cfg.learner.n_passes = 4;
    cfg.train_steps = 300;
    cfg.retrain_steps = 300;
    cfg.eval_interval = 150;
    cfg.eval_episodes = 2;
    cfg
}

fn trained(env: EnvId, seed: u64) -> Checkpoint {
    run_training_phase(&tiny(env), seed, None).unwrap().checkpoint
}

/// One-dimensional task with scripted rewards and membership, for checking
/// the bookkeeping of evaluation.
struct Scripted {
    rewards: Vec<f64>,
    inside: Vec<bool>,
    t: usize,
}

impl Environment for Scripted {
    fn id(&self) -> EnvId {
        EnvId::PointRoom
    }
    fn phase(&self) -> Phase {
        Phase::Retraining
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.rewards.len()
    }
    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.t = 0;
        self.observation()
    }
    fn step(&mut self, _action: &[f64]) -> Result<StepResult> {
        let r = self.rewards[self.t];
        self.t += 1;
        Ok(StepResult {
            observation: self.observation(),
            env_reward: r,
            terminated: false,
            truncated: self.t == self.rewards.len(),
            in_distribution: self.in_distribution(),
        })
    }
    fn observation(&self) -> Vec<f64> {
        vec![self.t as f64]
    }
    fn in_distribution(&self) -> bool {
        self.inside.get(self.t).copied().unwrap_or(false)
    }
}

fn scripted_policy() -> GaussianPolicy {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    GaussianPolicy::new(1, 1, &[3], 2, 0.0, &mut rng).unwrap()
}

#[test]
fn zeroed_return_counts_rewards_taken_from_inside_states() {
    let mut env = Scripted {
        rewards: vec![1.0, 2.0, 4.0, 8.0],
        inside: vec![true, false, false, true],
        t: 0,
    };
    let s = evaluate(&scripted_policy(), None, None, &mut env, 1, 0, 0).unwrap();
    assert_eq!(s.mean_raw, 15.0);
    assert_eq!(s.mean_zeroed, 9.0);
    assert_eq!(s.in_dist_frac, 0.5);
    assert_eq!(s.episodes[0].longest_streak, 1);
    assert_eq!(s.mean_du, None);
    assert_eq!(s.kl_to_org, None);
}

#[test]
fn fully_outside_episode_scores_zero() {
    let ckpt = trained(EnvId::PointRoom, 3);
    let mut policy = ckpt.policy().unwrap();
    for p in policy.mu_head.params_mut() {
        *p = 0.0;
    }
    let mut env = make_env(EnvId::PointRoom, Phase::Retraining);
    let s = evaluate(&policy, None, None, env.as_mut(), 2, 1, 0).unwrap();
    assert_eq!(s.mean_zeroed, 0.0);
    assert!(s.mean_raw < -100.0);
    assert_eq!(s.in_dist_frac, 0.0);
}

#[test]
fn fully_inside_episode_keeps_raw_return() {
    let ckpt = trained(EnvId::PointRoom, 3);
    let s = evaluate_checkpoint(&ckpt, Phase::Training, 3, 5).unwrap();
    assert_eq!(s.mean_zeroed, s.mean_raw);
    assert_eq!(s.in_dist_frac, 1.0);
    assert!(s.mean_du.is_some());
    assert_eq!(s.longest_streak(), 200);
}

#[test]
fn evaluation_needs_an_episode() {
    let mut env = make_env(EnvId::Pendulum, Phase::Training);
    let err = evaluate(&scripted_policy(), None, None, env.as_mut(), 0, 0, 0);
    assert!(err.is_err());
}

#[test]
fn evaluation_is_reproducible() {
    let ckpt = trained(EnvId::Pendulum, 2);
    let a = evaluate_checkpoint(&ckpt, Phase::Retraining, 2, 8).unwrap();
    let b = evaluate_checkpoint(&ckpt, Phase::Retraining, 2, 8).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn zeroed_return_is_bounded_by_raw_for_nonnegative_rewards(
        script in prop::collection::vec((0.01f64..5.0, any::<bool>()), 1..40)
    ) {
        let (rewards, inside): (Vec<f64>, Vec<bool>) = script.into_iter().unzip();
        let all_inside = inside.iter().all(|&b| b);
        let mut env = Scripted { rewards, inside, t: 0 };
        let s = evaluate(&scripted_policy(), None, None, &mut env, 1, 0, 0).unwrap();
        prop_assert!(s.mean_zeroed <= s.mean_raw);
        prop_assert_eq!(s.mean_zeroed == s.mean_raw, all_inside);
    }
}

/// Order statistic by rank counting, without sorting.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&w| w < v).count();
        let equal = values.iter().filter(|&&w| w == v).count();
        if below <= k && k < below + equal {
            return v;
        }
    }
    unreachable!()
}

fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let h = q * (values.len() - 1) as f64;
    let k = h as usize;
    if k + 1 >= values.len() {
        return kth_smallest(values, k);
    }
    let (a, b) = (kth_smallest(values, k), kth_smallest(values, k + 1));
    a + (h - k as f64) * (b - a)
}

#[test]
fn constant_distances_give_value_plus_margin() {
    let eps = epsilon_from_distances(&[0.1; 50], 0.95, 0.05).unwrap();
    assert!((eps - 0.15).abs() < 1e-15);
}

#[test]
fn margin_past_one_is_clamped_below_one() {
    let eps = epsilon_from_distances(&[0.9, 0.99], 0.95, 0.5).unwrap();
    assert!(eps < 1.0);
    assert_eq!(eps, EPSILON_CEIL);
    assert_eq!(epsilon_from_distances(&[0.0], 0.5, -1.0).unwrap(), EPSILON_FLOOR);
}

#[test]
fn calibration_quantile_matches_rank_counting() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    for n in [1usize, 2, 3, 7, 100, 333] {
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        for q in [0.05, 0.5, 0.9, 0.95, 0.999] {
            let expected = quantile_oracle(&values, q) + 0.05;
            let got = epsilon_from_distances(&values, q, 0.05).unwrap();
            assert!((got - expected.clamp(EPSILON_FLOOR, EPSILON_CEIL)).abs() < 1e-12, "n={n} q={q}");
        }
    }
}

#[test]
fn calibration_rejects_bad_inputs() {
    assert!(matches!(quantile(&[], 0.5), Err(Error::State(_))));
    assert!(epsilon_from_distances(&[0.1], 1.0, 0.0).is_err());
    assert!(epsilon_from_distances(&[0.1], 0.0, 0.0).is_err());
}

#[test]
fn calibration_without_maxima_is_a_state_error() {
    let mut cfg = tiny(EnvId::PointRoom);
    cfg.train_steps = 0;
    let ckpt = run_training_phase(&cfg, 1, None).unwrap().checkpoint;
    assert!(matches!(calibrate_epsilon(&ckpt, 2, 0.95, 0.05, 1), Err(Error::State(_))));
}

#[test]
fn calibration_of_a_trained_checkpoint_lies_in_the_unit_interval() {
    let ckpt = trained(EnvId::PointRoom, 4);
    let d = in_distribution_distances(&ckpt, 2, 1).unwrap();
    assert_eq!(d.len(), 400);
    let eps = calibrate_epsilon(&ckpt, 2, 0.95, 0.05, 1).unwrap();
    assert!(eps > 0.0 && eps < 1.0);
    assert_eq!(eps, epsilon_from_distances(&d, 0.95, 0.05).unwrap());
}

#[test]
fn zero_budget_flags_the_empty_tracker() {
    let mut cfg = tiny(EnvId::PointRoom);
    cfg.train_steps = 0;
    let out = run_training_phase(&cfg, 1, None).unwrap();
    assert_eq!(out.checkpoint.step, 0);
    assert!(out.checkpoint.warnings.contains(&TRACKER_UNINITIALIZED.to_string()));
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].mean_du, None);
}

#[test]
fn training_populates_maxima_and_rows_at_the_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_training_phase(&tiny(EnvId::Pendulum), 1, Some(dir.path())).unwrap();
    assert!(out.checkpoint.tracker.sigma_max.is_some());
    assert!(out.checkpoint.warnings.is_empty());
    let steps: Vec<u64> = out.rows.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 150, 300]);
    assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap(), out.rows);
    assert_eq!(Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap(), out.checkpoint);
}

#[test]
fn training_runs_are_byte_identical_for_a_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny(EnvId::PointRoom);
    run_training_phase(&cfg, 9, Some(a.path())).unwrap();
    run_training_phase(&cfg, 9, Some(b.path())).unwrap();
    run_training_phase(&cfg, 10, Some(c.path())).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, METRICS_FILE), read(&b, METRICS_FILE));
    assert_eq!(read(&a, CHECKPOINT_FILE), read(&b, CHECKPOINT_FILE));
    assert_ne!(read(&a, METRICS_FILE), read(&c, METRICS_FILE));
}

#[test]
fn divergence_keeps_the_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(EnvId::Pendulum);
    cfg.learner.lr = 1e300;
    cfg.train_steps = 2000;
    let err = run_training_phase(&cfg, 1, Some(dir.path())).err().expect("diverges");
    assert!(err.is_numeric(), "{err}");
    let ckpt = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert!(ckpt.tensors.values().all(|t| t.data.iter().all(|v| v.is_finite())));
    assert!(ckpt.step < 2000);
    assert!(!read_metrics(&dir.path().join(METRICS_FILE)).unwrap().is_empty());
}

#[test]
fn recalibration_rebuilds_the_maxima() {
    let mut cfg = tiny(EnvId::PointRoom);
    let plain = run_training_phase(&cfg, 5, None).unwrap().checkpoint;
    cfg.recalibrate_sigma_max = true;
    cfg.recalibration_samples = 50;
    let recal = run_training_phase(&cfg, 5, None).unwrap().checkpoint;
    assert_eq!(plain.tensors, recal.tensors);
    let (a, b) = (plain.tracker.sigma_max.unwrap(), recal.tracker.sigma_max.unwrap());
    assert_ne!(a, b);
    assert!(b.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn retraining_rejects_mismatched_inputs() {
    let ckpt = trained(EnvId::PointRoom, 1);
    let cfg = tiny(EnvId::Pendulum);
    assert!(matches!(run_retraining_phase(&cfg, &ckpt, 1, None), Err(Error::Config(_))));

    let mut cfg = tiny(EnvId::PointRoom);
    cfg.learner.hidden = vec![9];
    assert!(matches!(run_retraining_phase(&cfg, &ckpt, 1, None), Err(Error::Config(_))));

    let mut empty = tiny(EnvId::PointRoom);
    empty.train_steps = 0;
    let untrained = run_training_phase(&empty, 1, None).unwrap().checkpoint;
    let cfg = tiny(EnvId::PointRoom);
    assert!(matches!(run_retraining_phase(&cfg, &untrained, 1, None), Err(Error::Config(_))));

    let mut retrained_phase = ckpt.clone();
    retrained_phase.phase = Phase::Retraining;
    assert!(matches!(run_retraining_phase(&cfg, &retrained_phase, 1, None), Err(Error::Config(_))));
}

#[test]
fn original_policy_is_untouched_by_retraining() {
    let ckpt = trained(EnvId::PointRoom, 2);
    let before = ckpt.policy().unwrap();
    let out = run_retraining_phase(&tiny(EnvId::PointRoom), &ckpt, 2, None).unwrap();
    assert_eq!(out.sac.original_policy(), Some(&before));
    assert_ne!(out.sac.policy, before);
    assert_eq!(out.rows.len(), 3);
    assert!(out.rows.iter().all(|r| r.mean_du.is_some()));
}

#[test]
fn retraining_agents_follow_the_variant() {
    let ckpt = trained(EnvId::PointRoom, 2);
    for v in Variant::ALL {
        let mut cfg = tiny(EnvId::PointRoom);
        cfg.variant = v;
        let agent = retraining_agent(&cfg, &ckpt, 1).unwrap();
        assert_eq!(agent.cfg.reward_mode, v.reward_mode());
        assert_eq!(agent.cfg.upc, v.uses_consolidation());
        assert_eq!(agent.cfg.warmup_steps, 0);
        assert!(agent.replay.is_empty());
        assert!(agent.sac.original_policy().is_some());
    }
}

#[test]
fn sac_env_stores_environment_rewards() {
    let ckpt = trained(EnvId::PointRoom, 2);
    let mut cfg = tiny(EnvId::PointRoom);
    cfg.variant = Variant::SacEnv;
    let mut agent = retraining_agent(&cfg, &ckpt, 1).unwrap();
    let mut env = make_env(EnvId::PointRoom, Phase::Retraining);
    for _ in 0..100 {
        agent.step(env.as_mut()).unwrap();
    }
    assert!(agent.replay.iter().all(|t| t.effective_reward == t.env_reward));
}

#[test]
fn sero_rewards_the_first_step_from_spawn_with_negative_distance() {
    let ckpt = trained(EnvId::PointRoom, 2);
    let cfg = tiny(EnvId::PointRoom);
    let mut agent = retraining_agent(&cfg, &ckpt, 1).unwrap();
    let mut env = make_env(EnvId::PointRoom, Phase::Retraining);
    let record = agent.collect_step(env.as_mut()).unwrap();
    let t = &record.transition;
    assert!(!t.in_dist_state);
    let sigma = record.sigma_u_next.unwrap();
    let tracker = crate::uncertainty::UncertaintyTracker::from_parts(sigma.len(), record.sigma_max).unwrap();
    let d = tracker.distance(&sigma).unwrap();
    assert_eq!(t.effective_reward, -cfg.learner.lambda * d);
    assert_eq!(agent.cfg.reward_mode, RewardMode::AuxManual);
}

#[test]
fn own_criterion_at_threshold_one_matches_environment_reward() {
    let ckpt = trained(EnvId::PointRoom, 6);
    let mut oc = tiny(EnvId::PointRoom);
    oc.variant = Variant::SeroOc;
    oc.learner.epsilon = 1.0;
    oc.disable_upc = true;
    let mut env_only = oc.clone();
    env_only.variant = Variant::SacEnv;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_retraining_phase(&oc, &ckpt, 3, Some(a.path())).unwrap();
    run_retraining_phase(&env_only, &ckpt, 3, Some(b.path())).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(METRICS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
}
