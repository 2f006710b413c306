//! Dense MLPs with exact reverse-mode gradients, plus the loss and
//! aggregation kernels the detector is assembled from.
//!
//! Everything is `f64`. Batched entry points take one sample per row; the
//! single-vector `forward`/`backward` wrap them with a batch of one.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer `activation(W x + b)` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Post-activation output of each layer.
    outputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Parameter gradients, shape-congruent with the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: mlp
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .chain(self.biases.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Builds an MLP from already-initialized layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::shape(
                    format!("layer input width {}", pair[0].output_width()),
                    pair[1].input_width(),
                ));
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_width() {
                return Err(Error::shape(format!("bias length {}", l.output_width()), l.bias.len()));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Parameter("non-finite MLP parameter".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform initialized MLP; `widths` lists input, hidden and
    /// output widths. Hidden layers use ReLU, the output layer is linear.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs an input and an output width");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (widths[k], widths[k + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.gen_range(-bound..=bound)
                    }),
                    bias: Array1::zeros(fan_out),
                    activation: if k + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_width() {
            return Err(Error::shape(format!("input width {}", self.input_width()), width));
        }
        Ok(())
    }

    fn apply_layer(layer: &Dense, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), layer.output_width()));
        if x.nrows() > 0 {
            general_mat_mul(1.0, x, &layer.weight.t(), 0.0, &mut z);
        }
        let bias = &layer.bias;
        for mut row in z.rows_mut() {
            row += bias;
        }
        if layer.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }

    /// Batched forward pass recording a tape.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let y = Self::apply_layer(layer, &current.view());
            inputs.push(current);
            current = y.clone();
            outputs.push(y);
        }
        Ok((current, Tape { inputs, outputs }))
    }

    /// Batched forward pass without a tape.
    pub fn infer_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut current = Self::apply_layer(&self.layers[0], &x);
        for layer in &self.layers[1..] {
            current = Self::apply_layer(layer, &current.view());
        }
        Ok(current)
    }

    /// Reverse pass: gradients of `sum(y ⊙ upstream)` with respect to every
    /// parameter and to the input batch.
    pub fn backward_batch(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.backward_layers(tape, upstream, false)
    }

    /// Forward pass given the pre-activation of the first layer, for callers
    /// that assemble `W x + b` of the first layer themselves. The tape holds
    /// no first-layer input.
    pub fn forward_from_preactivation(&self, mut z0: Array2<f64>) -> Result<(Array2<f64>, Tape)> {
        if z0.ncols() != self.layers[0].output_width() {
            return Err(Error::shape(
                format!("pre-activation width {}", self.layers[0].output_width()),
                z0.ncols(),
            ));
        }
        if self.layers[0].activation == Activation::Relu {
            z0.mapv_inplace(|v| v.max(0.0));
        }
        let batch = z0.nrows();
        let mut inputs = vec![Array2::zeros((batch, 0))];
        let mut outputs = vec![z0.clone()];
        let mut current = z0;
        for layer in &self.layers[1..] {
            let y = Self::apply_layer(layer, &current.view());
            inputs.push(current);
            outputs.push(y.clone());
            current = y;
        }
        Ok((current, Tape { inputs, outputs }))
    }

    /// Reverse pass for a tape from [`Mlp::forward_from_preactivation`].
    /// Returns every gradient except the first-layer weights (left zero)
    /// and the gradient with respect to the first-layer pre-activation.
    pub fn backward_to_preactivation(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.backward_layers(tape, upstream, true)
    }

    fn backward_layers(
        &self,
        tape: &Tape,
        upstream: ArrayView2<f64>,
        stop_at_preactivation: bool,
    ) -> Result<(Gradients, Array2<f64>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::shape(
                format!("tape with {} layers", self.layers.len()),
                tape.inputs.len(),
            ));
        }
        let batch = tape.outputs.last().map_or(0, |y| y.nrows());
        if upstream.dim() != (batch, self.output_width()) {
            return Err(Error::shape(
                format!("upstream {}x{}", batch, self.output_width()),
                format!("{}x{}", upstream.nrows(), upstream.ncols()),
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                Zip::from(&mut delta)
                    .and(&tape.outputs[k])
                    .for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            grads.biases[k] = delta.sum_axis(Axis(0));
            if k == 0 && stop_at_preactivation {
                break;
            }
            let input = &tape.inputs[k];
            if batch > 0 {
                general_mat_mul(1.0, &delta.t(), input, 0.0, &mut grads.weights[k]);
            }
            let mut next = Array2::zeros((batch, layer.input_width()));
            if batch > 0 {
                general_mat_mul(1.0, &delta, &layer.weight, 0.0, &mut next);
            }
            delta = next;
        }
        Ok((grads, delta))
    }

    /// Single-vector forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Parameter(e.to_string()))?;
        let (y, tape) = self.forward_batch(view)?;
        Ok((y.into_raw_vec_and_offset().0, tape))
    }

    /// Single-vector reverse pass for a tape produced by [`Mlp::forward`].
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if tape.batch_size() != 1 {
            return Err(Error::shape("tape of batch size 1", tape.batch_size()));
        }
        let view = ArrayView2::from_shape((1, upstream.len()), upstream)
            .map_err(|e| Error::shape(format!("upstream length {}", self.output_width()), e))?;
        let (g, dx) = self.backward_batch(tape, view)?;
        Ok((g, dx.into_raw_vec_and_offset().0))
    }

    /// Sum of absolute weight values and the number of weights; biases excluded.
    pub fn weight_abs_sum(&self) -> (f64, usize) {
        self.layers.iter().fold((0.0, 0), |(s, n), l| {
            (
                s + l.weight.iter().map(|w| w.abs()).sum::<f64>(),
                n + l.weight.len(),
            )
        })
    }

    /// `param -= rate * grad` for every parameter.
    pub fn apply_step(&mut self, step: &Gradients, rate: f64) {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(step.weights.iter().zip(&step.biases))
        {
            layer.weight.scaled_add(-rate, gw);
            layer.bias.scaled_add(-rate, gb);
        }
    }
}

/// Element-wise maximum over rows `rows` of `values`, with the winning row
/// per column. An empty selection yields zeros and no winners.
pub fn max_rows(values: &ArrayView2<f64>, rows: &[usize]) -> (Vec<f64>, Vec<Option<usize>>) {
    let width = values.ncols();
    let mut best = vec![f64::NEG_INFINITY; width];
    let mut arg = vec![None; width];
    for &r in rows {
        let row = values.row(r);
        for c in 0..width {
            let v = row[c];
            if v > best[c] {
                best[c] = v;
                arg[c] = Some(r);
            }
        }
    }
    if rows.is_empty() {
        best.iter_mut().for_each(|v| *v = 0.0);
    }
    (best, arg)
}

/// Element-wise maximum of a set of vectors; the empty set maps to the zero
/// vector of `width`.
pub fn max_aggregate(vectors: &[&[f64]], width: usize) -> Result<Vec<f64>> {
    let mut out = vec![f64::NEG_INFINITY; width];
    if vectors.is_empty() {
        return Ok(vec![0.0; width]);
    }
    for v in vectors {
        if v.len() != width {
            return Err(Error::shape(format!("width {width}"), v.len()));
        }
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o = o.max(x);
        }
    }
    Ok(out)
}

/// Softmax probabilities with max-shift stabilization.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::Parameter(format!(
            "cross-entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if target >= logits.len() {
        return Err(Error::Parameter(format!(
            "target {target} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    let loss = log_sum - (logits[target] - m);
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Huber loss `½r²` inside `delta`, linear outside, with its derivative.
pub fn huber(residual: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("huber delta must be > 0, got {delta}")));
    }
    let a = residual.abs();
    if a <= delta {
        Ok((0.5 * residual * residual, residual))
    } else {
        Ok((delta * (a - 0.5 * delta), delta * residual.signum()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(n: usize) -> Dense {
        Dense {
            weight: Array2::eye(n),
            bias: Array1::zeros(n),
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(vec![identity_layer(3)]).unwrap();
        let (y, _) = mlp.forward(&[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let mlp = Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((2, 3)),
            bias: array![0.5, -1.0],
            activation: Activation::Relu,
        }])
        .unwrap();
        let (y, _) = mlp.forward(&[7.0, 8.0, 9.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.0]);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let mlp = Mlp::from_layers(vec![identity_layer(3)]).unwrap();
        assert!(matches!(mlp.forward(&[1.0]), Err(Error::Shape { .. })));
        let bad = Mlp::from_layers(vec![identity_layer(3), identity_layer(2)]);
        assert!(matches!(bad, Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[4, 5, 3], &mut rng);
        let (_, tape) = mlp.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let (g, dx) = mlp.backward(&tape, &[0.0; 3]).unwrap();
        assert_eq!(g.norm_squared(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mlp = Mlp::new(&[3, 2], &mut rng);
        mlp.layers_mut()[0].activation = Activation::Identity;
        let x = [0.5, -1.0, 2.0];
        let up = [3.0, -0.5];
        let (_, tape) = mlp.forward(&x).unwrap();
        let (g, _) = mlp.backward(&tape, &up).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_abs_diff_eq!(g.weights[0][[i, j]], up[i] * x[j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn max_aggregate_cases() {
        let a = [1.0, -2.0];
        let b = [0.5, 3.0];
        assert_eq!(max_aggregate(&[&a], 2).unwrap(), vec![1.0, -2.0]);
        assert_eq!(max_aggregate(&[&a, &b], 2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(max_aggregate(&[&b, &a], 2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(max_aggregate(&[], 2).unwrap(), vec![0.0, 0.0]);
        assert!(max_aggregate(&[&a, &[1.0][..]], 2).is_err());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let (l, _) = softmax_cross_entropy(&[0.3, 0.3, 0.3], 1).unwrap();
        assert_abs_diff_eq!(l, 3f64.ln(), epsilon = 1e-12);
        let (l, g) = softmax_cross_entropy(&[50.0, 0.0], 0).unwrap();
        assert!(l < 1e-20);
        assert!(g[0].abs() < 1e-20);
        assert!(softmax_cross_entropy(&[1.0, 2.0], 2).is_err());
        assert!(softmax_cross_entropy(&[1.0], 0).is_err());
    }

    #[test]
    fn huber_closed_forms() {
        assert_eq!(huber(0.0, 1.0).unwrap(), (0.0, 0.0));
        assert_eq!(huber(0.5, 1.0).unwrap(), (0.125, 0.5));
        assert_eq!(huber(2.0, 1.0).unwrap(), (1.5, 1.0));
        assert_eq!(huber(-2.0, 1.0).unwrap(), (1.5, -1.0));
        assert!(huber(1.0, 0.0).is_err());
    }
}
