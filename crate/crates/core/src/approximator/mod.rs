//! Small feedforward networks with exact reverse-mode gradients and
//! inverted dropout.

mod adam;
mod matrix;
mod mlp;
pub mod primitives;

pub use adam::{adam_step, adam_step_in_place, AdamState};
pub use matrix::Matrix;
pub use mlp::{gradients, Activation, Dense, DropoutMask, GradientSet, Mlp, Tape};

/// Central-difference gradient of `f` over every parameter of `mlp`.
#[cfg(test)]
pub(crate) fn finite_difference<F>(mlp: &Mlp, h: f64, f: F) -> crate::Result<(f64, Vec<f64>)>
where
    F: Fn(&Mlp) -> crate::Result<f64>,
{
    let value = f(mlp)?;
    let mut probe = mlp.clone();
    let n = mlp.parameter_count();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = *probe.params().nth(i).unwrap();
        *probe.params_mut().nth(i).unwrap() = orig + h;
        let plus = f(&probe)?;
        *probe.params_mut().nth(i).unwrap() = orig - h;
        let minus = f(&probe)?;
        *probe.params_mut().nth(i).unwrap() = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok((value, out))
}
