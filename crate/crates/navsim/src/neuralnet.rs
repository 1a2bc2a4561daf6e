//! Dense feed-forward network with manual backprop, `f64` throughout.
//!
//! Hidden layers use ReLU, the output layer is linear. `backward` computes
//! the gradient of `output . upstream` for a caller-supplied upstream
//! vector, which is all a squared-TD-error loss needs. Training uses plain
//! SGD with classical momentum.
//!
//! Checkpoints are JSON: `{"sizes": [...], "layers": [{"weights": [...],
//! "bias": [...]}, ...]}` with weights row-major (`weights[o * n_in + i]`).
//! Serialization round-trips every finite `f64` bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{context}: expected length {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid network file: {0}")]
    Format(String),
}

/// One dense layer's parameters (or the gradients for one layer; the shapes
/// are identical). Weights are row-major: `weights[o * n_in + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }
}

/// Parameters of a multilayer perceptron. `sizes` lists the input width
/// followed by every layer's output width, e.g. `[20, 64, 64, 9]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-parameter gradients, shaped exactly like the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn fill(&mut self, value: f64) {
        for layer in &mut self.layers {
            layer.weights.fill(value);
            layer.bias.fill(value);
        }
    }
}

/// Activations recorded by a forward pass, for reuse by backprop.
/// `activations[0]` is the input, `activations[k]` the post-activation
/// output of layer `k`; the last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Four-way split dot product: deterministic summation order, enough
/// instruction-level parallelism to keep one core busy.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let split = a.len() & !3;
    let mut acc = [0.0f64; 4];
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl MlpParams {
    /// All-zero parameters. `sizes` needs at least an input and an output
    /// width, all positive.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self {
            sizes: sizes.to_vec(),
            layers,
        }
    }

    /// He-uniform initialization: weights drawn from
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))` per layer, biases zero.
    /// Deterministic in `seed`.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut params = Self::zeros(sizes);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for (layer, w) in params.layers.iter_mut().zip(sizes.windows(2)) {
            let bound = (6.0 / w[0] as f64).sqrt();
            for weight in &mut layer.weights {
                *weight = rng.random_range(-bound..bound);
            }
        }
        params
    }

    /// Builds a network from explicit layers, validating shapes.
    pub fn from_layers(sizes: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(NetError::Format(format!("bad layer sizes {sizes:?}")));
        }
        if layers.len() != sizes.len() - 1 {
            return Err(NetError::ShapeMismatch {
                context: "layer count",
                expected: sizes.len() - 1,
                got: layers.len(),
            });
        }
        for (layer, w) in layers.iter().zip(sizes.windows(2)) {
            if layer.weights.len() != w[0] * w[1] {
                return Err(NetError::ShapeMismatch {
                    context: "layer weights",
                    expected: w[0] * w[1],
                    got: layer.weights.len(),
                });
            }
            if layer.bias.len() != w[1] {
                return Err(NetError::ShapeMismatch {
                    context: "layer bias",
                    expected: w[1],
                    got: layer.bias.len(),
                });
            }
        }
        Ok(Self { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::ShapeMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Network output for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            current = self.layer_forward(k, layer, &current, k < last);
        }
        Ok(current)
    }

    fn layer_forward(&self, k: usize, layer: &Layer, input: &[f64], relu: bool) -> Vec<f64> {
        let n_in = self.sizes[k];
        let n_out = self.sizes[k + 1];
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &layer.weights[o * n_in..(o + 1) * n_in];
            let mut v = layer.bias[o] + dot(row, input);
            if relu && v < 0.0 {
                v = 0.0;
            }
            out.push(v);
        }
        out
    }

    /// Forward pass that keeps every layer's activations for backprop.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, NetError> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let next = self.layer_forward(k, layer, &activations[k], k < last);
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of `output . upstream` with respect to every parameter,
    /// added into `grads`. ReLU units that output zero pass no gradient.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), NetError> {
        if upstream.len() != self.output_dim() {
            return Err(NetError::ShapeMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if cache.activations.len() != self.layers.len() + 1
            || cache
                .activations
                .iter()
                .zip(&self.sizes)
                .any(|(a, &s)| a.len() != s)
        {
            return Err(NetError::ShapeMismatch {
                context: "forward cache",
                expected: self.layers.len() + 1,
                got: cache.activations.len(),
            });
        }

        let mut delta = upstream.to_vec();
        let mut next_delta: Vec<f64> = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let n_in = self.sizes[k];
            let input_act = &cache.activations[k];
            let layer = &self.layers[k];
            let grad_layer = &mut grads.layers[k];

            for (o, &d) in delta.iter().enumerate() {
                grad_layer.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad_layer.weights[o * n_in..(o + 1) * n_in];
                for (g, &a) in row.iter_mut().zip(input_act) {
                    *g += d * a;
                }
            }

            if k == 0 {
                break;
            }
            next_delta.clear();
            next_delta.resize(n_in, 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for (nd, &w) in next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            // ReLU mask: units that output zero were clipped
            for (nd, &a) in next_delta.iter_mut().zip(input_act) {
                if a <= 0.0 {
                    *nd = 0.0;
                }
            }
            std::mem::swap(&mut delta, &mut next_delta);
        }
        Ok(())
    }

    /// Fresh gradients of `output . upstream` for one input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients, NetError> {
        let cache = self.forward_cached(input)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(&cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Gradient of `output . upstream` with respect to the *input* vector.
    pub fn input_gradient(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>, NetError> {
        let cache = self.forward_cached(input)?;
        if upstream.len() != self.output_dim() {
            return Err(NetError::ShapeMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let n_in = self.sizes[k];
            let layer = &self.layers[k];
            let mut next_delta = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for (nd, &w) in next_delta.iter_mut().zip(row) {
                    *nd += d * w;
                }
            }
            if k > 0 {
                for (nd, &a) in next_delta.iter_mut().zip(&cache.activations[k]) {
                    if a <= 0.0 {
                        *nd = 0.0;
                    }
                }
            }
            delta = next_delta;
        }
        Ok(delta)
    }

    /// Writes the checkpoint JSON described in the module docs.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, self).map_err(|e| NetError::Format(e.to_string()))?;
        Ok(())
    }

    /// Reads a checkpoint written by [`MlpParams::save`], validating shapes.
    pub fn load(path: &Path) -> Result<Self, NetError> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let raw: MlpParams =
            serde_json::from_reader(reader).map_err(|e| NetError::Format(e.to_string()))?;
        Self::from_layers(raw.sizes, raw.layers)
    }
}

/// SGD with classical momentum: `v <- momentum * v + g`,
/// `p <- p - learning_rate * v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Gradients,
}

impl SgdMomentum {
    pub fn new(params: &MlpParams, learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Gradients::zeros_like(params),
        }
    }

    /// One update step. Velocity and gradients must match the network shape.
    pub fn step(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<(), NetError> {
        if grads.layers.len() != params.layers.len() {
            return Err(NetError::ShapeMismatch {
                context: "gradient layers",
                expected: params.layers.len(),
                got: grads.layers.len(),
            });
        }
        for ((layer, grad), vel) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity.layers)
        {
            if grad.weights.len() != layer.weights.len() || grad.bias.len() != layer.bias.len() {
                return Err(NetError::ShapeMismatch {
                    context: "gradient layer shape",
                    expected: layer.weights.len(),
                    got: grad.weights.len(),
                });
            }
            for ((p, &g), v) in layer
                .weights
                .iter_mut()
                .zip(&grad.weights)
                .zip(&mut vel.weights)
            {
                *v = self.momentum * *v + g;
                *p -= self.learning_rate * *v;
            }
            for ((p, &g), v) in layer.bias.iter_mut().zip(&grad.bias).zip(&mut vel.bias) {
                *v = self.momentum * *v + g;
                *p -= self.learning_rate * *v;
            }
        }
        Ok(())
    }

    /// Zeroes the accumulated velocity.
    pub fn reset(&mut self) {
        self.velocity.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const TOL: f64 = 1e-12;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_input(dim: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    /// Naive reference forward pass, independently written against
    /// nested-vec matrices.
    fn reference_forward(params: &MlpParams, input: &[f64]) -> Vec<f64> {
        let sizes = params.sizes();
        let mut current = input.to_vec();
        for (k, layer) in params.layers().iter().enumerate() {
            let (n_in, n_out) = (sizes[k], sizes[k + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = layer.bias[o];
                for i in 0..n_in {
                    acc += layer.weights[o * n_in + i] * current[i];
                }
                if k + 1 < sizes.len() - 1 && acc < 0.0 {
                    acc = 0.0;
                }
                next[o] = acc;
            }
            current = next;
        }
        current
    }

    fn relative_error(numeric: f64, analytic: f64) -> f64 {
        (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8)
    }

    /// Central-difference gradient of `forward(input) . upstream` with
    /// respect to the parameter reached through `layer`, `index`.
    fn numeric_grad(
        params: &MlpParams,
        input: &[f64],
        upstream: &[f64],
        layer: usize,
        weight_index: Option<usize>,
        bias_index: Option<usize>,
    ) -> f64 {
        let h = 1e-5;
        let mut bump = |delta: f64| -> f64 {
            let mut p = params.clone();
            match (weight_index, bias_index) {
                (Some(i), None) => p.layers_mut()[layer].weights[i] += delta,
                (None, Some(i)) => p.layers_mut()[layer].bias[i] += delta,
                _ => unreachable!(),
            }
            let out = p.forward(input).unwrap();
            out.iter().zip(upstream).map(|(o, u)| o * u).sum()
        };
        (bump(h) - bump(-h)) / (2.0 * h)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let params = MlpParams::zeros(&[4, 6, 3]);
        let out = params.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn single_linear_layer_is_identity_with_identity_weights() {
        let mut params = MlpParams::zeros(&[3, 3]);
        for i in 0..3 {
            params.layers_mut()[0].weights[i * 3 + i] = 1.0;
        }
        let input = [0.3, -1.7, 2.5];
        let out = params.forward(&input).unwrap();
        assert_eq!(out, input.to_vec());
    }

    #[test]
    fn hidden_relu_clips_negative_preactivations() {
        let mut params = MlpParams::zeros(&[1, 1, 1]);
        params.layers_mut()[0].weights[0] = 1.0;
        params.layers_mut()[1].weights[0] = 1.0;
        assert_eq!(params.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(params.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn forward_matches_reference_implementation() {
        let mut r = rng(11);
        for seed in 0..20u64 {
            let params = MlpParams::init(&[7, 12, 9, 4], seed);
            let input = random_input(7, &mut r);
            let fast = params.forward(&input).unwrap();
            let slow = reference_forward(&params, &input);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= TOL, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let params = MlpParams::zeros(&[4, 2]);
        let err = params.forward(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            NetError::ShapeMismatch {
                expected: 4,
                got: 2,
                ..
            }
        ));
    }

    #[test]
    fn backward_single_linear_layer_outer_product() {
        // with upstream e_j, the weight gradient row j is the input and
        // the bias gradient row j is one
        let params = MlpParams::init(&[3, 2], 5);
        let input = [0.5, -1.0, 2.0];
        let grads = params.backward(&input, &[0.0, 1.0]).unwrap();
        let layer = &grads.layers()[0];
        assert_eq!(&layer.weights[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&layer.weights[3..6], &input);
        assert_eq!(layer.bias, vec![0.0, 1.0]);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_gradients() {
        let params = MlpParams::init(&[4, 8, 3], 9);
        let mut r = rng(21);
        let input = random_input(4, &mut r);
        let grads = params.backward(&input, &[0.0; 3]).unwrap();
        for layer in grads.layers() {
            assert!(layer.weights.iter().all(|&g| g == 0.0));
            assert!(layer.bias.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(31);
        for seed in 0..5u64 {
            let params = MlpParams::init(&[5, 8, 7, 3], 100 + seed);
            let input = random_input(5, &mut r);
            let upstream: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let grads = params.backward(&input, &upstream).unwrap();
            for (k, layer) in grads.layers().iter().enumerate() {
                for (i, &g) in layer.weights.iter().enumerate() {
                    let n = numeric_grad(&params, &input, &upstream, k, Some(i), None);
                    assert!(
                        relative_error(n, g) < 1e-4,
                        "layer {k} weight {i}: numeric {n} analytic {g}"
                    );
                }
                for (i, &g) in layer.bias.iter().enumerate() {
                    let n = numeric_grad(&params, &input, &upstream, k, None, Some(i));
                    assert!(
                        relative_error(n, g) < 1e-4,
                        "layer {k} bias {i}: numeric {n} analytic {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn network_is_locally_linear_in_its_input() {
        // away from ReLU kinks the Jacobian predicts small input
        // perturbations almost exactly
        let params = MlpParams::init(&[6, 10, 8, 4], 77);
        let mut r = rng(41);
        let input = random_input(6, &mut r);
        let base = params.forward(&input).unwrap();

        let mut jacobian = Vec::new();
        for j in 0..4 {
            let mut upstream = vec![0.0; 4];
            upstream[j] = 1.0;
            jacobian.push(params.input_gradient(&input, &upstream).unwrap());
        }

        let eps: Vec<f64> = (0..6).map(|_| r.random_range(-1e-6..1e-6)).collect();
        let moved_input: Vec<f64> = input.iter().zip(&eps).map(|(x, e)| x + e).collect();
        let moved = params.forward(&moved_input).unwrap();
        for j in 0..4 {
            let predicted: f64 = base[j] + dot(&jacobian[j], &eps);
            assert!(
                (moved[j] - predicted).abs() <= 1e-9,
                "output {j}: moved {} predicted {predicted}",
                moved[j]
            );
        }
    }

    #[test]
    fn sgd_without_momentum_subtracts_gradient() {
        let mut params = MlpParams::init(&[2, 2], 3);
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        grads.layers[0].weights.copy_from_slice(&[0.1, -0.2, 0.3, 0.4]);
        grads.layers[0].bias.copy_from_slice(&[1.0, -1.0]);
        let mut opt = SgdMomentum::new(&params, 1.0, 0.0);
        opt.step(&mut params, &grads).unwrap();
        for i in 0..4 {
            assert_eq!(
                params.layers()[0].weights[i],
                before.layers()[0].weights[i] - grads.layers[0].weights[i]
            );
        }
        assert_eq!(params.layers()[0].bias[0], before.layers()[0].bias[0] - 1.0);
    }

    #[test]
    fn momentum_amplifies_repeated_gradient() {
        // constant gradient g twice: first step lr*g, second lr*1.9*g
        let mut params = MlpParams::zeros(&[1, 1]);
        let mut grads = Gradients::zeros_like(&params);
        grads.layers[0].weights[0] = 0.5;
        grads.layers[0].bias[0] = 0.0;
        let lr = 0.1;
        let mut opt = SgdMomentum::new(&params, lr, 0.9);

        opt.step(&mut params, &grads).unwrap();
        let after_first = params.layers()[0].weights[0];
        assert!((after_first - (-lr * 0.5)).abs() <= TOL);

        opt.step(&mut params, &grads).unwrap();
        let second_delta = params.layers()[0].weights[0] - after_first;
        assert!(
            (second_delta - (-lr * 1.9 * 0.5)).abs() <= TOL,
            "second step {second_delta}"
        );
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpParams::init(&[20, 64, 64, 9], 42);
        let b = MlpParams::init(&[20, 64, 64, 9], 42);
        let c = MlpParams::init(&[20, 64, 64, 9], 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (layer, w) in a.layers().iter().zip(a.sizes().windows(2)) {
            let bound = (6.0 / w[0] as f64).sqrt();
            assert!(layer.weights.iter().all(|v| v.abs() <= bound));
            assert!(layer.bias.iter().all(|&v| v == 0.0));
            assert!(layer.weights.iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut params = MlpParams::init(&[6, 5, 4], 1234);
        // plant values with awkward bit patterns
        params.layers_mut()[0].weights[0] = -0.0;
        params.layers_mut()[0].weights[1] = f64::MIN_POSITIVE / 8.0;
        params.layers_mut()[1].bias[0] = 0.1 + 0.2;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        params.save(&path).unwrap();
        let restored = MlpParams::load(&path).unwrap();

        assert_eq!(restored.sizes(), params.sizes());
        for (a, b) in restored.layers().iter().zip(params.layers()) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.bias.iter().zip(&b.bias) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn load_rejects_malformed_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"sizes":[2,2],"layers":[{"weights":[1.0,2.0,3.0],"bias":[0.0,0.0]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            MlpParams::load(&path),
            Err(NetError::ShapeMismatch { .. })
        ));
    }
}
