use std::fs;
use std::path::{Path, PathBuf};

use oodrl_core::harness::{
    calibrate_epsilon, evaluate_checkpoint, parse_pairs, run_retraining_phase, run_training_phase, Checkpoint,
    RunConfig, Variant, CHECKPOINT_FILE,
};
use oodrl_core::{Error, Phase, Result};

use crate::plot;
use crate::{Command, RunArgs};

pub const CONFIG_FILE: &str = "config.txt";
pub const CALIBRATED_CONFIG_FILE: &str = "config.calibrated.txt";

pub(crate) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { run } => train(&resolve(&run, Phase::Training, &[])?),
        Command::Retrain {
            run,
            checkpoint,
            variants,
        } => {
            let mut extra = Vec::new();
            if let Some(c) = checkpoint {
                extra.push(("checkpoint".to_string(), c.display().to_string()));
            }
            let cfg = resolve(&run, Phase::Retraining, &extra)?;
            let variants = if variants.is_empty() {
                vec![cfg.variant]
            } else {
                variants.iter().map(|v| v.parse()).collect::<Result<Vec<Variant>>>()?
            };
            retrain(&cfg, &variants)
        }
        Command::Eval {
            checkpoint,
            phase,
            episodes,
            seed,
        } => {
            let phases = match phase {
                Some(p) => vec![p.parse()?],
                None => vec![Phase::Training, Phase::Retraining],
            };
            eval(&Checkpoint::load(&checkpoint)?, &phases, episodes, seed)
        }
        Command::Calibrate { run, checkpoint } => {
            let mut extra = Vec::new();
            if let Some(c) = checkpoint {
                extra.push(("checkpoint".to_string(), c.display().to_string()));
            }
            calibrate(&resolve(&run, Phase::Retraining, &extra)?)
        }
        Command::Plot {
            runs,
            out,
            baseline,
            metric,
            title,
            timestamp,
        } => {
            let series = runs.iter().map(|p| plot::load_series(p, &metric)).collect::<Result<Vec<_>>>()?;
            let baseline = baseline.map(|b| plot::resolve_baseline(&b)).transpose()?;
            let title = title.unwrap_or_else(|| metric.clone());
            let stamp = timestamp.then(plot::unix_time);
            let svg = plot::render_svg(&series, baseline, &title, stamp);
            if let Some(dir) = out.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, svg)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Config file keys, then flags, then the phase implied by the command.
fn resolve(run: &RunArgs, phase: Phase, extra: &[(String, String)]) -> Result<RunConfig> {
    let mut pairs = match &run.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    let mut flag = |k: &str, v: String| pairs.push((k.to_string(), v));
    if let Some(env) = &run.env {
        flag("env", env.clone());
    }
    if !run.seeds.is_empty() {
        let seeds: Vec<String> = run.seeds.iter().map(u64::to_string).collect();
        flag("seeds", seeds.join(","));
    }
    if let Some(steps) = run.steps {
        let key = match phase {
            Phase::Training => "train_steps",
            Phase::Retraining => "retrain_steps",
        };
        flag(key, steps.to_string());
    }
    if let Some(out) = &run.out {
        flag("out_dir", out.display().to_string());
    }
    for kv in &run.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        flag(k.trim(), v.trim().to_string());
    }
    for (k, v) in extra {
        flag(k, v.clone());
    }
    flag("phase", phase.to_string());
    RunConfig::from_pairs(&pairs)
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Config echo for a single seed of a run.
fn write_echo(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunConfig> {
    let mut one = cfg.clone();
    one.seeds = vec![seed];
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), one.render())?;
    Ok(one)
}

fn train(cfg: &RunConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.out_dir, seed);
        let one = write_echo(cfg, seed, &dir)?;
        let out = run_training_phase(&one, seed, Some(&dir))?;
        let last = out.rows.last().expect("step 0 is always evaluated");
        println!(
            "seed {seed}: {} steps, return {} at step {}, checkpoint {}",
            cfg.train_steps,
            last.raw_return,
            last.step,
            dir.join(CHECKPOINT_FILE).display()
        );
    }
    Ok(())
}

/// A file is used as is; a directory is expected to hold `seed_<n>/checkpoint.json`.
fn checkpoint_for(cfg: &RunConfig, seed: u64) -> Result<PathBuf> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("a training checkpoint is required (--checkpoint)".into()))?;
    let file = if path.is_dir() {
        seed_dir(path, seed).join(CHECKPOINT_FILE)
    } else {
        path.clone()
    };
    if !file.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", file.display())));
    }
    Ok(file)
}

fn retrain(cfg: &RunConfig, variants: &[Variant]) -> Result<()> {
    for &variant in variants {
        for &seed in &cfg.seeds {
            let path = checkpoint_for(cfg, seed)?;
            let ckpt = Checkpoint::load(&path)?;
            let mut run = cfg.clone();
            run.variant = variant;
            run.checkpoint = Some(path);
            let dir = seed_dir(&cfg.out_dir.join(variant.to_string()), seed);
            let one = write_echo(&run, seed, &dir)?;
            let out = run_retraining_phase(&one, &ckpt, seed, Some(&dir))?;
            let last = out.rows.last().expect("step 0 is always evaluated");
            println!(
                "{variant} seed {seed}: zeroed return {} at step {}, first in-distribution step {}",
                last.zeroed_return,
                last.step,
                out.first_in_dist_step.map_or("none".to_string(), |s| s.to_string())
            );
        }
    }
    Ok(())
}

fn eval(ckpt: &Checkpoint, phases: &[Phase], episodes: usize, seed: u64) -> Result<()> {
    println!(
        "{:<11} {:>8} {:>12} {:>10} {:>12} {:>10} {:>8} {:>8}",
        "phase", "episodes", "raw_mean", "raw_std", "zeroed_mean", "zeroed_std", "in_dist", "mean_du"
    );
    for &phase in phases {
        let s = evaluate_checkpoint(ckpt, phase, episodes, seed)?;
        println!(
            "{:<11} {:>8} {:>12.3} {:>10.3} {:>12.3} {:>10.3} {:>8.3} {:>8}",
            phase.to_string(),
            episodes,
            s.mean_raw,
            s.std_raw,
            s.mean_zeroed,
            s.std_zeroed,
            s.in_dist_frac,
            s.mean_du.map_or("-".to_string(), |d| format!("{d:.3}"))
        );
    }
    Ok(())
}

fn calibrate(cfg: &RunConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let path = checkpoint_for(cfg, seed)?;
        let ckpt = Checkpoint::load(&path)?;
        let eps = calibrate_epsilon(
            &ckpt,
            cfg.calibration_episodes,
            cfg.calibration_quantile,
            cfg.calibration_margin,
            seed,
        )?;
        let mut copy = cfg.clone();
        copy.seeds = vec![seed];
        copy.learner.epsilon = eps;
        copy.checkpoint = Some(path.clone());
        let target = path.parent().unwrap_or(Path::new(".")).join(CALIBRATED_CONFIG_FILE);
        fs::write(&target, copy.render())?;
        println!("seed {seed}: epsilon={eps} (written to {})", target.display());
    }
    Ok(())
}
