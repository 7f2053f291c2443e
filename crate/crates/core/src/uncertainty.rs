//! Monte-Carlo-dropout uncertainty, the running per-feature maximum, and the
//! scalar uncertainty distance derived from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::Mlp;
use crate::error::{Error, Result};

/// Per-feature variance of the encoder output under dropout. Elements are ≥ 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyVector(pub Vec<f64>);

impl UncertaintyVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Population variance over `n_passes` dropout forward passes of `encoder`.
pub fn mc_uncertainty<R: Rng + ?Sized>(
    encoder: &Mlp,
    state: &[f64],
    n_passes: usize,
    rng: &mut R,
) -> Result<UncertaintyVector> {
    if n_passes < 2 {
        return Err(Error::Argument(format!(
            "at least two dropout passes are needed, got {n_passes}"
        )));
    }
    if encoder.layers().len() < 2 {
        return Err(Error::Argument("encoder has no hidden layer to apply dropout to".into()));
    }
    let d = encoder.output_dim();
    let mut outputs = Vec::with_capacity(n_passes);
    for _ in 0..n_passes {
        let mask = encoder.sample_mask(rng);
        outputs.push(encoder.forward(state, Some(&mask))?);
    }
    // Deviations are taken from the first pass so identical passes give an
    // exact zero.
    let n = n_passes as f64;
    let origin = outputs[0].clone();
    let mut mean = vec![0.0; d];
    for y in &outputs {
        for ((m, yi), o) in mean.iter_mut().zip(y).zip(&origin) {
            *m += yi - o;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for y in &outputs {
        for (((v, yi), o), m) in var.iter_mut().zip(y).zip(&origin).zip(&mean) {
            let e = yi - o - m;
            *v += e * e;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    Ok(UncertaintyVector(var))
}

/// Element-wise running maximum of observed uncertainty vectors. `None`
/// stands for the all-`−∞` state before the first observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTracker {
    dim: usize,
    sigma_max: Option<Vec<f64>>,
}

impl UncertaintyTracker {
    pub fn new(dim: usize) -> Self {
        UncertaintyTracker { dim, sigma_max: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_initialized(&self) -> bool {
        self.sigma_max.is_some()
    }

    pub fn sigma_max(&self) -> Option<&[f64]> {
        self.sigma_max.as_deref()
    }

    /// Restores a tracker from a stored maximum.
    pub fn from_parts(dim: usize, sigma_max: Option<Vec<f64>>) -> Result<Self> {
        if let Some(m) = &sigma_max {
            if m.len() != dim {
                return Err(Error::shape(format!("sigma_max has {} entries, expected {dim}", m.len())));
            }
            if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Argument("sigma_max entries must be finite and non-negative".into()));
            }
        }
        Ok(UncertaintyTracker { dim, sigma_max })
    }

    /// Raises each stored maximum to the incoming value where it is larger.
    pub fn update(&mut self, sigma_u: &UncertaintyVector) -> Result<()> {
        if sigma_u.len() != self.dim {
            return Err(Error::shape(format!(
                "uncertainty vector has {} entries, tracker expects {}",
                sigma_u.len(),
                self.dim
            )));
        }
        match &mut self.sigma_max {
            None => self.sigma_max = Some(sigma_u.0.clone()),
            Some(max) => max
                .iter_mut()
                .zip(&sigma_u.0)
                .for_each(|(m, v)| {
                    if *v > *m {
                        *m = *v
                    }
                }),
        }
        Ok(())
    }

    /// Clipped ratios `n_i = σu_i / σmax_i ∈ [0, 1]`; features whose maximum is
    /// zero contribute 0.
    pub fn normalized(&self, sigma_u: &UncertaintyVector) -> Result<Vec<f64>> {
        let max = self
            .sigma_max
            .as_ref()
            .ok_or_else(|| Error::State("uncertainty tracker has not observed any state".into()))?;
        if sigma_u.len() != self.dim {
            return Err(Error::shape("uncertainty vector does not match the tracker"));
        }
        Ok(sigma_u
            .0
            .iter()
            .zip(max)
            .map(|(&u, &m)| if m > 0.0 { (u / m).clamp(0.0, 1.0) } else { 0.0 })
            .collect())
    }

    /// Self-weighted mean of the normalized uncertainty, `Σn²/Σn`, in `[0, 1]`.
    pub fn distance(&self, sigma_u: &UncertaintyVector) -> Result<f64> {
        Ok(weighted_distance(&self.normalized(sigma_u)?))
    }
}

/// `Σ n_i² / Σ n_i`, defined as 0 when every `n_i` is 0.
pub fn weighted_distance(normalized: &[f64]) -> f64 {
    let total: f64 = normalized.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let squares: f64 = normalized.iter().map(|n| n * n).sum();
    (squares / total).clamp(0.0, 1.0)
}

/// Reward for reaching a state at uncertainty distance `d_u_next`.
pub fn auxiliary_reward(d_u_next: f64) -> f64 {
    -d_u_next
}
