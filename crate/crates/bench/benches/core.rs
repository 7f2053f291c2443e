use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oodrl_bench::{batch, config, rng, sac, warm_agent};
use oodrl_core::approximator::Matrix;
use oodrl_core::uncertainty::mc_uncertainty;
use oodrl_core::{Activation, Mlp};

const OBS: usize = 4;
const ACT: usize = 2;

fn mlp(c: &mut Criterion) {
    let mut group = c.benchmark_group("mlp");
    for width in [32, 64, 256] {
        let net = Mlp::new(&[OBS, width, width, ACT], Activation::Relu, 0.1, &mut rng(1)).unwrap();
        let input = Matrix::from_vec(64, OBS, (0..64 * OBS).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        group.bench_with_input(BenchmarkId::new("forward_batch64", width), &width, |b, _| {
            b.iter(|| net.forward_batch(black_box(&input), None).unwrap())
        });
        let tape = net.forward_tape(&input, None).unwrap();
        let grad = Matrix::from_vec(64, ACT, vec![1.0; 64 * ACT]).unwrap();
        group.bench_with_input(BenchmarkId::new("backward_batch64", width), &width, |b, _| {
            b.iter(|| net.backward(black_box(&tape), black_box(&grad), true).unwrap())
        });
    }
    group.finish();
}

fn uncertainty(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_uncertainty");
    let encoder = Mlp::new(&[OBS, 64, 64, 64], Activation::Relu, 0.1, &mut rng(2)).unwrap();
    let state = [0.1, -0.4, 0.7, 0.2];
    for passes in [10, 30] {
        let mut r = rng(3);
        group.bench_with_input(BenchmarkId::from_parameter(passes), &passes, |b, &n| {
            b.iter(|| mc_uncertainty(&encoder, black_box(&state), n, &mut r).unwrap())
        });
    }
    group.finish();
}

fn sac_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("sac_update");
    for width in [32, 64] {
        let mut cfg = config(width);
        let b64 = batch(OBS, ACT, cfg.batch_size, 4).unwrap();
        let mut state = sac(OBS, ACT, &cfg, 5).unwrap();
        let mut r = rng(6);
        group.bench_with_input(BenchmarkId::new("critic_and_policy", width), &width, |b, _| {
            b.iter(|| {
                state.critic_update(&b64, &cfg, &mut r).unwrap();
                state.policy_update(&b64, &cfg, &mut r).unwrap()
            })
        });
        cfg.upc = true;
        let mut state = sac(OBS, ACT, &cfg, 5).unwrap();
        let frozen = state.policy.clone();
        state.set_original_policy(frozen).unwrap();
        group.bench_with_input(BenchmarkId::new("policy_with_consolidation", width), &width, |b, _| {
            b.iter(|| state.policy_update(&b64, &cfg, &mut r).unwrap())
        });
    }
    group.finish();
}

fn agent_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("agent_step");
    for track in [false, true] {
        let (mut agent, mut env) = warm_agent(config(32), track).unwrap();
        let name = if track { "tracked" } else { "untracked" };
        group.bench_function(name, |b| b.iter(|| agent.step(env.as_mut()).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mlp, uncertainty, sac_update, agent_step);
criterion_main!(benches);
