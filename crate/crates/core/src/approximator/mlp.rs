use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{accumulate_outer, matmul, matmul_transposed_b, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// One affine layer, `y = W x + b`, with `W` stored `outputs × inputs` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform fan-in initialisation in `±1/sqrt(inputs)`.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weight = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Dense {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn weight_at(&self, out: usize, inp: usize) -> f64 {
        self.weight[out * self.inputs + inp]
    }

    fn check(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::shape("layer dimensions must be positive"));
        }
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::shape(format!(
                "layer {}x{} has {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// Feedforward network: hidden layers use `activation` followed by inverted
/// dropout at the layer's rate; the output layer is purely affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
    /// Dropout rate per hidden layer (`layers.len() - 1` entries).
    dropout: Vec<f64>,
}

/// Per-hidden-layer binary keep mask. Entries are exactly 0 or 1; the `1/q`
/// rescaling is applied during the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    layers: Vec<Vec<f64>>,
    keep: Vec<f64>,
}

impl DropoutMask {
    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn keep_probabilities(&self) -> &[f64] {
        &self.keep
    }

    /// Builds a mask from explicit 0/1 entries.
    pub fn from_layers(mlp: &Mlp, layers: Vec<Vec<f64>>) -> Result<Self> {
        let mask = DropoutMask {
            layers,
            keep: mlp.dropout.iter().map(|p| 1.0 - p).collect(),
        };
        mlp.check_mask(&mask)?;
        if mask.layers.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Argument("mask entries must be 0 or 1".into()));
        }
        Ok(mask)
    }

    pub fn ones(mlp: &Mlp) -> Self {
        DropoutMask {
            layers: mlp.hidden_widths().map(|w| vec![1.0; w]).collect(),
            keep: mlp.dropout.iter().map(|p| 1.0 - p).collect(),
        }
    }
}

/// Gradient with the same layout as an [`Mlp`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Dense>,
}

impl GradientSet {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        GradientSet {
            layers: mlp
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|x| *x *= c);
            l.bias.iter_mut().for_each(|x| *x *= c);
        }
    }
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Tape {
    /// Input fed to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activations of hidden layers.
    pre: Vec<Matrix>,
    /// Effective multiplier per hidden unit (`mask/q`), absent for deterministic passes.
    scales: Option<Vec<Vec<f64>>>,
    output: Matrix,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn input(&self) -> &Matrix {
        &self.inputs[0]
    }
}

impl Mlp {
    /// Random network with layer widths `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::shape("a network needs at least input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect::<Vec<_>>();
        let dropout = vec![dropout; sizes.len() - 2];
        Mlp::from_layers(layers, activation, dropout)
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation, dropout: Vec<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        for l in &layers {
            l.check()?;
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::shape(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        if dropout.len() != layers.len() - 1 {
            return Err(Error::shape(format!(
                "{} dropout rates for {} hidden layers",
                dropout.len(),
                layers.len() - 1
            )));
        }
        if let Some(p) = dropout.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::Argument(format!("dropout rate {p} outside [0, 1)")));
        }
        Ok(Mlp {
            layers,
            activation,
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_rates(&self) -> &[f64] {
        &self.dropout
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout.iter().any(|&p| p > 0.0)
    }

    pub fn hidden_widths(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    /// Draws an i.i.d. Bernoulli(q) keep mask for every hidden unit.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> DropoutMask {
        let keep: Vec<f64> = self.dropout.iter().map(|p| 1.0 - p).collect();
        let layers = self
            .hidden_widths()
            .zip(&keep)
            .map(|(w, &q)| {
                (0..w)
                    .map(|_| if q >= 1.0 || rng.random::<f64>() < q { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        DropoutMask { layers, keep }
    }

    fn check_mask(&self, mask: &DropoutMask) -> Result<()> {
        let ok = mask.layers.len() == self.layers.len() - 1
            && mask.layers.iter().zip(self.hidden_widths()).all(|(m, w)| m.len() == w);
        if ok {
            Ok(())
        } else {
            Err(Error::shape("dropout mask does not match the network's hidden layers"))
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&Matrix::row_vector(input), mask)?.into_vec())
    }

    pub fn forward_batch(&self, input: &Matrix, mask: Option<&DropoutMask>) -> Result<Matrix> {
        Ok(self.forward_tape(input, mask)?.output)
    }

    /// Batched forward pass recording everything backpropagation needs.
    /// A mask, when given, applies identically to every row.
    pub fn forward_tape(&self, input: &Matrix, mask: Option<&DropoutMask>) -> Result<Tape> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        if let Some(m) = mask {
            self.check_mask(m)?;
        }
        let scales: Option<Vec<Vec<f64>>> = mask.map(|m| {
            m.layers
                .iter()
                .zip(&m.keep)
                .map(|(bits, &q)| bits.iter().map(|b| b / q).collect())
                .collect()
        });
        let n = input.rows();
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut current = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(n, layer.outputs);
            matmul_transposed_b(
                current.as_slice(),
                n,
                layer.inputs,
                &layer.weight,
                layer.outputs,
                z.as_mut_slice(),
            );
            for i in 0..n {
                z.row_mut(i)
                    .iter_mut()
                    .zip(&layer.bias)
                    .for_each(|(v, b)| *v += b);
            }
            if !z.is_finite() {
                return Err(Error::numeric(k, "forward pass produced a non-finite value"));
            }
            inputs.push(current);
            if k == last {
                current = z;
            } else {
                let mut h = z.clone();
                let act = self.activation;
                h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                if let Some(s) = &scales {
                    for i in 0..n {
                        h.row_mut(i).iter_mut().zip(&s[k]).for_each(|(v, c)| *v *= c);
                    }
                }
                pre.push(z);
                current = h;
            }
        }
        Ok(Tape {
            inputs,
            pre,
            scales,
            output: current,
        })
    }

    /// Backpropagates `grad_output` (dL/d output, same shape as the tape's
    /// output). Returns parameter gradients when `want_params` is set, and
    /// always the gradient with respect to the input.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_output: &Matrix,
        want_params: bool,
    ) -> Result<(Option<GradientSet>, Matrix)> {
        let out = &tape.output;
        if grad_output.rows() != out.rows() || grad_output.cols() != out.cols() {
            return Err(Error::shape("output gradient does not match the forward output"));
        }
        let n = out.rows();
        let mut grads = want_params.then(|| GradientSet::zeros_like(self));
        let mut delta = grad_output.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k < self.layers.len() - 1 {
                // delta currently holds dL/dh for hidden layer k
                let z = &tape.pre[k];
                let act = self.activation;
                for i in 0..n {
                    let zr = z.row(i);
                    let dr = delta.row_mut(i);
                    for (j, d) in dr.iter_mut().enumerate() {
                        *d *= act.derivative(zr[j]);
                    }
                    if let Some(s) = &tape.scales {
                        dr.iter_mut().zip(&s[k]).for_each(|(d, c)| *d *= c);
                    }
                }
            }
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.layers[k];
                accumulate_outer(
                    delta.as_slice(),
                    n,
                    layer.outputs,
                    tape.inputs[k].as_slice(),
                    layer.inputs,
                    &mut gl.weight,
                );
                for i in 0..n {
                    gl.bias.iter_mut().zip(delta.row(i)).for_each(|(b, d)| *b += d);
                }
            }
            let mut prev = Matrix::zeros(n, layer.inputs);
            matmul(
                delta.as_slice(),
                n,
                layer.outputs,
                &layer.weight,
                layer.inputs,
                prev.as_mut_slice(),
            );
            if !prev.is_finite() {
                return Err(Error::numeric(k, "backward pass produced a non-finite value"));
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Polyak update `self ← τ·source + (1−τ)·self`.
    pub fn blend_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.params_mut().zip(source.params()) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

/// Value and parameter gradient of a scalar objective over the network's
/// batched output.
///
/// `objective` maps the network output to `(value, dvalue/doutput)`; compose
/// it from the helpers in [`super::primitives`].
pub fn gradients<F>(
    mlp: &Mlp,
    input: &Matrix,
    mask: Option<&DropoutMask>,
    objective: F,
) -> Result<(f64, GradientSet)>
where
    F: FnOnce(&Matrix) -> Result<(f64, Matrix)>,
{
    let tape = mlp.forward_tape(input, mask)?;
    let (value, grad_out) = objective(tape.output())?;
    if !value.is_finite() {
        return Err(Error::numeric(mlp.layers.len(), "objective value is not finite"));
    }
    let (grads, _) = mlp.backward(&tape, &grad_out, true)?;
    Ok((value, grads.expect("parameter gradients requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense {
            inputs: 2,
            outputs: 2,
            weight: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        };
        let mlp = Mlp::from_layers(vec![layer], Activation::Relu, vec![]).unwrap();
        assert_eq!(mlp.forward(&[1.0, 2.0], None).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn all_ones_mask_at_zero_rate_is_exactly_deterministic() {
        let mlp = Mlp::new(&[3, 8, 8, 2], Activation::Relu, 0.0, &mut rng(1)).unwrap();
        let mask = DropoutMask::ones(&mlp);
        let x = [0.3, -1.2, 0.7];
        assert_eq!(mlp.forward(&x, Some(&mask)).unwrap(), mlp.forward(&x, None).unwrap());
    }

    #[test]
    fn masked_forward_matches_hand_evaluation() {
        let mut r = rng(7);
        let mlp = Mlp::new(&[3, 4, 2], Activation::Relu, 0.5, &mut r).unwrap();
        let bits = vec![vec![1.0, 0.0, 1.0, 1.0]];
        let mask = DropoutMask::from_layers(&mlp, bits.clone()).unwrap();
        let x = [0.5, -0.25, 1.5];

        let l0 = &mlp.layers()[0];
        let l1 = &mlp.layers()[1];
        let hidden: Vec<f64> = (0..4)
            .map(|j| {
                let z: f64 = l0.bias[j] + (0..3).map(|i| l0.weight_at(j, i) * x[i]).sum::<f64>();
                z.max(0.0) * bits[0][j] / 0.5
            })
            .collect();
        let expect: Vec<f64> = (0..2)
            .map(|o| l1.bias[o] + (0..4).map(|j| l1.weight_at(o, j) * hidden[j]).sum::<f64>())
            .collect();
        let got = mlp.forward(&x, Some(&mask)).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn zero_rate_mask_is_all_ones() {
        let mlp = Mlp::new(&[2, 16, 16, 1], Activation::Relu, 0.0, &mut rng(2)).unwrap();
        let mask = mlp.sample_mask(&mut rng(3));
        assert!(mask.layers().iter().flatten().all(|&b| b == 1.0));
    }

    #[test]
    fn rate_of_one_is_rejected() {
        let err = Mlp::new(&[2, 4, 1], Activation::Relu, 1.0, &mut rng(0)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn mask_fraction_tracks_keep_probability() {
        // Binomial(1e5, 0.5): sd ≈ 158, so [0.49, 0.51] is a 6.3-sigma window.
        let layers = vec![Dense::zeros(1, 100_000), Dense::zeros(100_000, 1)];
        let mlp = Mlp::from_layers(layers, Activation::Relu, vec![0.5]).unwrap();
        let mask = mlp.sample_mask(&mut rng(11));
        let frac = mask.layers()[0].iter().sum::<f64>() / 1e5;
        assert!((0.49..=0.51).contains(&frac), "{frac}");
    }

    #[test]
    fn mask_sampling_is_reproducible() {
        let mlp = Mlp::new(&[2, 32, 32, 3], Activation::Relu, 0.3, &mut rng(0)).unwrap();
        assert_eq!(mlp.sample_mask(&mut rng(5)), mlp.sample_mask(&mut rng(5)));
    }

    #[test]
    fn shape_errors() {
        let mlp = Mlp::new(&[3, 4, 2], Activation::Relu, 0.1, &mut rng(0)).unwrap();
        assert!(matches!(mlp.forward(&[1.0, 2.0], None), Err(Error::Shape(_))));
        let bad = DropoutMask::ones(&Mlp::new(&[3, 5, 2], Activation::Relu, 0.1, &mut rng(0)).unwrap());
        assert!(matches!(mlp.forward(&[1.0, 2.0, 3.0], Some(&bad)), Err(Error::Shape(_))));
        let chained = Mlp::from_layers(
            vec![Dense::zeros(2, 3), Dense::zeros(4, 1)],
            Activation::Relu,
            vec![0.0],
        );
        assert!(matches!(chained, Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_forward_reports_layer() {
        let mut mlp = Mlp::new(&[1, 2, 1], Activation::Relu, 0.0, &mut rng(0)).unwrap();
        mlp.layers_mut()[1].bias[0] = f64::NAN;
        match mlp.forward(&[1.0], None) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn squared_norm_gradient_is_twice_weight() {
        // Objective ||W||² does not depend on the output; exercise the
        // gradient container directly.
        let mlp = Mlp::new(&[3, 2], Activation::Relu, 0.0, &mut rng(4)).unwrap();
        let mut g = GradientSet::zeros_like(&mlp);
        for (gw, w) in g.layers[0].weight.iter_mut().zip(&mlp.layers()[0].weight) {
            *gw = 2.0 * w;
        }
        let (value, fd) = super::super::finite_difference(&mlp, 1e-5, |m| {
            Ok(m.layers()[0].weight.iter().map(|w| w * w).sum())
        })
        .unwrap();
        assert!(value > 0.0);
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn polyak_blend_midpoint() {
        let mut target = Mlp::from_layers(vec![Dense::zeros(1, 1)], Activation::Relu, vec![]).unwrap();
        let mut source = target.clone();
        source.params_mut().for_each(|p| *p = 2.0);
        target.blend_from(&source, 0.5);
        assert!(target.params().all(|&p| p == 1.0));
        target.blend_from(&source, 1.0);
        assert_eq!(target, source);
    }
}
