//! Versioned JSON snapshot of a learner.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{Activation, Dense, Mlp};
use crate::envs::{EnvId, Phase};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, SacState};
use crate::policy::GaussianPolicy;
use crate::uncertainty::UncertaintyTracker;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Warning recorded when a checkpoint carries no uncertainty maxima.
pub const TRACKER_UNINITIALIZED: &str = "tracker_uninitialized";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub dim: usize,
    pub sigma_max: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub env: EnvId,
    pub phase: Phase,
    pub step: u64,
    pub config: LearnerConfig,
    /// Random streams by role, captured when the snapshot was taken.
    pub rng: BTreeMap<String, ChaCha8Rng>,
    pub tensors: BTreeMap<String, Tensor>,
    pub tracker: TrackerState,
    pub warnings: Vec<String>,
}

const NETWORKS: [&str; 7] = [
    "policy.encoder",
    "policy.mu_head",
    "policy.logstd_head",
    "critic1",
    "critic2",
    "target1",
    "target2",
];

fn put_mlp(tensors: &mut BTreeMap<String, Tensor>, name: &str, mlp: &Mlp) {
    for (k, layer) in mlp.layers().iter().enumerate() {
        tensors.insert(
            format!("{name}.{k}.weight"),
            Tensor {
                shape: vec![layer.outputs, layer.inputs],
                data: layer.weight.clone(),
            },
        );
        tensors.insert(
            format!("{name}.{k}.bias"),
            Tensor {
                shape: vec![layer.outputs],
                data: layer.bias.clone(),
            },
        );
    }
}

fn take_mlp(tensors: &BTreeMap<String, Tensor>, name: &str, dropout: f64) -> Result<Mlp> {
    let mut layers = Vec::new();
    while let Some(w) = tensors.get(&format!("{name}.{}.weight", layers.len())) {
        let k = layers.len();
        let b = tensors
            .get(&format!("{name}.{k}.bias"))
            .ok_or_else(|| Error::Checkpoint(format!("{name}.{k}.bias missing")))?;
        let [outputs, inputs] = w.shape[..] else {
            return Err(Error::Checkpoint(format!("{name}.{k}.weight is not a matrix")));
        };
        if w.data.len() != outputs * inputs || b.shape != [outputs] || b.data.len() != outputs {
            return Err(Error::Checkpoint(format!("{name}.{k} has inconsistent shapes")));
        }
        layers.push(Dense {
            inputs,
            outputs,
            weight: w.data.clone(),
            bias: b.data.clone(),
        });
    }
    if layers.is_empty() {
        return Err(Error::Checkpoint(format!("network {name} missing")));
    }
    let rates = vec![dropout; layers.len() - 1];
    Mlp::from_layers(layers, Activation::Relu, rates).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
}

impl Checkpoint {
    pub fn capture(
        sac: &SacState,
        config: &LearnerConfig,
        env: EnvId,
        phase: Phase,
        step: u64,
        rng: BTreeMap<String, ChaCha8Rng>,
    ) -> Self {
        let mut tensors = BTreeMap::new();
        let nets: [&Mlp; 7] = [
            &sac.policy.encoder,
            &sac.policy.mu_head,
            &sac.policy.logstd_head,
            &sac.critic1,
            &sac.critic2,
            &sac.target1,
            &sac.target2,
        ];
        for (name, mlp) in NETWORKS.iter().zip(nets) {
            put_mlp(&mut tensors, name, mlp);
        }
        let sigma_max = sac.tracker.sigma_max().map(<[f64]>::to_vec);
        let mut warnings = Vec::new();
        if sigma_max.is_none() {
            warnings.push(TRACKER_UNINITIALIZED.to_string());
        }
        Checkpoint {
            version: CHECKPOINT_VERSION,
            env,
            phase,
            step,
            config: config.clone(),
            rng,
            tensors,
            tracker: TrackerState {
                dim: sac.tracker.dim(),
                sigma_max,
            },
            warnings,
        }
    }

    pub fn policy(&self) -> Result<GaussianPolicy> {
        let encoder = take_mlp(&self.tensors, NETWORKS[0], self.config.dropout)?;
        let mu = take_mlp(&self.tensors, NETWORKS[1], 0.0)?;
        let logstd = take_mlp(&self.tensors, NETWORKS[2], 0.0)?;
        GaussianPolicy::from_parts(encoder, mu, logstd).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn tracker(&self) -> Result<UncertaintyTracker> {
        UncertaintyTracker::from_parts(self.tracker.dim, self.tracker.sigma_max.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Learner rebuilt from the snapshot, with fresh optimizer moments.
    pub fn sac_state(&self) -> Result<SacState> {
        let nets = NETWORKS[3..]
            .iter()
            .map(|n| take_mlp(&self.tensors, n, 0.0))
            .collect::<Result<Vec<_>>>()?;
        let [c1, c2, t1, t2]: [Mlp; 4] = nets.try_into().expect("four critics");
        SacState::from_parts(self.policy()?, c1, c2, t1, t2, Some(self.tracker()?))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "unsupported checkpoint version {v}, expected {CHECKPOINT_VERSION}"
                )))
            }
            None => return Err(Error::Checkpoint("checkpoint has no version".into())),
        }
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.config.validate()?;
        ckpt.sac_state()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
