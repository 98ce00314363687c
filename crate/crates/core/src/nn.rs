//! Dense multilayer perceptrons with a hand-written backward pass.
//!
//! Everything is `f64`. Batches are row-major [`Matrix`] values, one sample
//! per row; the single-sample entry points [`mlp_forward`] and
//! [`mlp_backward`] are thin wrappers over the batched routines.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

/// Layer widths plus activations. Hidden layers share one activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape(format!(
                "an MLP needs at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("zero-width layer in {layer_sizes:?}")));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// Observation in, one tanh-squashed action out.
    pub fn actor(obs_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, Activation::Relu, Activation::Tanh)
    }

    /// Observation and action concatenated at the input, linear Q-value out.
    pub fn critic(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim + action_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, Activation::Relu, Activation::Linear)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Row-major dense matrix; rows are samples when used as a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// One dense layer: `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            outputs,
            inputs,
            weights: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn new(outputs: usize, inputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != outputs * inputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "layer {outputs}x{inputs} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            outputs,
            inputs,
            weights,
            bias,
        })
    }

    fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// Weights as an `inputs x outputs` row-major copy.
    fn transposed(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.weights.len()];
        for (o, row) in self.weights.chunks_exact(self.inputs).enumerate() {
            for (i, &w) in row.iter().enumerate() {
                t[i * self.outputs + o] = w;
            }
        }
        t
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.outputs == other.outputs && self.inputs == other.inputs
    }
}

/// Ordered per-layer weights and biases. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[1], w[0]))
            .collect();
        Self { layers }
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for layer in &mut params.layers {
            let bound = 1.0 / libm::sqrt(layer.inputs as f64);
            for v in layer.values_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn conforms_to(&self, spec: &MlpSpec) -> bool {
        self.layers.len() == spec.num_layers()
            && self
                .layers
                .iter()
                .zip(spec.layer_sizes.windows(2))
                .all(|(l, w)| {
                    l.inputs == w[0]
                        && l.outputs == w[1]
                        && l.weights.len() == w[0] * w[1]
                        && l.bias.len() == w[1]
                })
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    /// Layer order, each layer's weights row-major followed by its bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn unflatten(values: &[f64], spec: &MlpSpec) -> Result<Self> {
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "flat vector has {} values, spec needs {expected}",
                values.len()
            )));
        }
        let mut params = Self::zeros(spec);
        let mut rest = values;
        for layer in &mut params.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(params)
    }

    /// Polyak blend in place: `self = (1 - tau) * self + tau * source`.
    pub fn blend_from(&mut self, source: &ModelParams, tau: f64) -> Result<()> {
        if !self.same_shape(source) {
            return Err(Error::Shape(
                "soft update between differently shaped models".into(),
            ));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Validation(format!(
                "tau must lie in [0, 1], got {tau}"
            )));
        }
        let keep = 1.0 - tau;
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (tv, sv) in t
                .weights
                .iter_mut()
                .zip(&s.weights)
                .chain(t.bias.iter_mut().zip(&s.bias))
            {
                *tv = keep * *tv + tau * *sv;
            }
        }
        Ok(())
    }

    /// Batched forward pass. The cache keeps every layer's input and output.
    pub fn forward_batch(&self, spec: &MlpSpec, input: &Matrix) -> Result<ForwardCache> {
        if !self.conforms_to(spec) {
            return Err(Error::Shape(
                "parameters do not match the network spec".into(),
            ));
        }
        if input.cols != spec.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.cols,
                spec.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (idx, layer) in self.layers.iter().enumerate() {
            let act = spec.activation(idx);
            let x = &activations[idx];
            let wt = layer.transposed();
            let mut out = Matrix::zeros(x.rows, layer.outputs);
            for r in 0..x.rows {
                let orow = out.row_mut(r);
                orow.copy_from_slice(&layer.bias);
                for (i, &xi) in x.row(r).iter().enumerate() {
                    if xi != 0.0 {
                        axpy(orow, xi, &wt[i * layer.outputs..(i + 1) * layer.outputs]);
                    }
                }
                for v in orow.iter_mut() {
                    *v = act.apply(*v);
                }
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Batched backward pass for an upstream gradient on the network output.
    /// Returns parameter gradients (summed over the batch) and the gradient
    /// with respect to every input row.
    pub fn backward_batch(
        &self,
        spec: &MlpSpec,
        cache: &ForwardCache,
        output_grad: &Matrix,
    ) -> Result<(ModelParams, Matrix)> {
        if !self.conforms_to(spec) || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Shape(
                "activation cache does not match these parameters".into(),
            ));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            let (a_in, a_out) = (&cache.activations[idx], &cache.activations[idx + 1]);
            if a_in.cols != layer.inputs || a_out.cols != layer.outputs || a_in.rows != a_out.rows {
                return Err(Error::Shape(format!(
                    "stale activation cache at layer {idx}"
                )));
            }
        }
        let out = cache.output();
        if output_grad.rows != out.rows || output_grad.cols != out.cols {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, network output is {}x{}",
                output_grad.rows, output_grad.cols, out.rows, out.cols
            )));
        }

        let mut grads = ModelParams::zeros(spec);
        let last = self.layers.len() - 1;
        let mut delta = output_grad.clone();
        apply_derivative(&mut delta, cache.output(), spec.activation(last));

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let x = &cache.activations[idx];
            let g = &mut grads.layers[idx];
            let mut input_grad = Matrix::zeros(x.rows, layer.inputs);
            for r in 0..x.rows {
                let xr = x.row(r);
                let dr = delta.row(r);
                let gin = input_grad.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    axpy(
                        &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs],
                        d,
                        xr,
                    );
                    g.bias[o] += d;
                    axpy(gin, d, layer.weight_row(o));
                }
            }
            if idx > 0 {
                apply_derivative(&mut input_grad, x, spec.activation(idx - 1));
            }
            delta = input_grad;
        }
        Ok((grads, delta))
    }
}

/// Activations recorded by a forward pass, input first.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.activations[self.activations.len() - 1]
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn activations(&self) -> &[Matrix] {
        &self.activations
    }
}

fn apply_derivative(grad: &mut Matrix, activation_output: &Matrix, act: Activation) {
    if act == Activation::Linear {
        return;
    }
    for (g, &a) in grad.data.iter_mut().zip(&activation_output.data) {
        *g *= act.derivative_from_output(a);
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Single-sample forward pass.
pub fn mlp_forward(
    params: &ModelParams,
    spec: &MlpSpec,
    input: &[f64],
) -> Result<(Vec<f64>, ForwardCache)> {
    let batch = Matrix::from_vec(1, input.len(), input.to_vec())?;
    let cache = params.forward_batch(spec, &batch)?;
    let out = cache.output().row(0).to_vec();
    Ok((out, cache))
}

/// Single-sample backward pass against a cache from [`mlp_forward`].
pub fn mlp_backward(
    params: &ModelParams,
    spec: &MlpSpec,
    cache: &ForwardCache,
    output_grad: &[f64],
) -> Result<(ModelParams, Vec<f64>)> {
    let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
    let (grads, input_grad) = params.backward_batch(spec, cache, &g)?;
    Ok((grads, input_grad.into_vec()))
}

/// `(1 - tau) * target + tau * source`, elementwise.
pub fn soft_update(target: &ModelParams, source: &ModelParams, tau: f64) -> Result<ModelParams> {
    let mut out = target.clone();
    out.blend_from(source, tau)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first_moment: ModelParams,
    second_moment: ModelParams,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(spec: &MlpSpec, learning_rate: f64) -> Result<Self> {
        Self::with_betas(spec, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(
        spec: &MlpSpec,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Validation(format!(
                "Adam betas must lie in [0, 1), got {beta1}, {beta2}"
            )));
        }
        Ok(Self {
            first_moment: ModelParams::zeros(spec),
            second_moment: ModelParams::zeros(spec),
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return Err(Error::Shape(
            "Adam parameters, gradients and moments disagree".into(),
        ));
    }
    for (idx, layer) in grads.layers.iter().enumerate() {
        if let Some(bad) = layer.values().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: idx,
                context: format!("gradient entry {bad}"),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - libm::pow(b1, t);
    let c2 = 1.0 - libm::pow(b2, t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    for (idx, (((p, g), m), v)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment.layers)
        .zip(&mut state.second_moment.layers)
        .enumerate()
    {
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((pv, &gv), mv), vv) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        };
        update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        if !p.values().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                layer: idx,
                context: "parameters after Adam update".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_by_one(w: f64, b: f64, out: Activation) -> (MlpSpec, ModelParams) {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, out).unwrap();
        let params = ModelParams {
            layers: vec![Layer::new(1, 1, vec![w], vec![b]).unwrap()],
        };
        (spec, params)
    }

    #[test]
    fn spec_rejects_degenerate_shapes() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Linear).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu, Activation::Linear).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(vec![5, 7, 3], Activation::Relu, Activation::Linear).unwrap();
        let params = ModelParams::zeros(&spec);
        let (out, _) = mlp_forward(&params, &spec, &[1.0, -2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn affine_single_layer() {
        let (spec, params) = one_by_one(2.0, 1.0, Activation::Linear);
        let (out, _) = mlp_forward(&params, &spec, &[3.0]).unwrap();
        assert_eq!(out, vec![7.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let (spec, params) = one_by_one(2.0, 1.0, Activation::Linear);
        assert!(matches!(
            mlp_forward(&params, &spec, &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_by_hand() {
        let (spec, params) = one_by_one(2.0, 0.0, Activation::Linear);
        let (_, cache) = mlp_forward(&params, &spec, &[3.0]).unwrap();
        let (g, gin) = mlp_backward(&params, &spec, &cache, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![3.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(gin, vec![2.0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let spec = MlpSpec::new(vec![4, 6, 2], Activation::Relu, Activation::Tanh).unwrap();
        let params = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        let (_, cache) = mlp_forward(&params, &spec, &[0.3, -0.1, 0.8, 0.5]).unwrap();
        let (g, gin) = mlp_backward(&params, &spec, &cache, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_cache_from_other_network() {
        let a = MlpSpec::new(vec![2, 3, 1], Activation::Relu, Activation::Linear).unwrap();
        let b = MlpSpec::new(vec![2, 4, 1], Activation::Relu, Activation::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pa = ModelParams::init(&a, &mut rng);
        let pb = ModelParams::init(&b, &mut rng);
        let (_, cache) = mlp_forward(&pa, &a, &[1.0, 2.0]).unwrap();
        assert!(matches!(
            mlp_backward(&pb, &b, &cache, &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn flatten_layout_and_count() {
        let (spec, params) = one_by_one(2.0, 1.0, Activation::Linear);
        let flat = params.flatten();
        assert_eq!(flat, vec![2.0, 1.0]);
        assert_eq!(ModelParams::unflatten(&flat, &spec).unwrap(), params);

        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Relu, Activation::Linear).unwrap();
        assert_eq!(spec.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(ModelParams::zeros(&spec).flatten().len(), 26);
        assert!(ModelParams::unflatten(&[0.0; 29], &spec).is_err());
    }

    #[test]
    fn soft_update_endpoints_and_midpoint() {
        let (_, t) = one_by_one(0.0, 3.0, Activation::Linear);
        let (_, s) = one_by_one(2.0, -1.0, Activation::Linear);
        assert_eq!(soft_update(&t, &s, 1.0).unwrap(), s);
        assert_eq!(soft_update(&t, &s, 0.0).unwrap(), t);
        let mid = soft_update(&t, &s, 0.5).unwrap();
        assert_eq!(mid.layers[0].weights, vec![1.0]);
        assert_eq!(mid.layers[0].bias, vec![1.0]);
    }

    #[test]
    fn soft_update_rejects_mismatch() {
        let a = ModelParams::zeros(
            &MlpSpec::new(vec![2, 1], Activation::Relu, Activation::Linear).unwrap(),
        );
        let b = ModelParams::zeros(
            &MlpSpec::new(vec![3, 1], Activation::Relu, Activation::Linear).unwrap(),
        );
        assert!(matches!(soft_update(&a, &b, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Relu, Activation::Linear).unwrap();
        let mut params = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        let before = params.clone();
        let mut state = AdamState::new(&spec, 1e-4).unwrap();
        adam_step(&mut params, &ModelParams::zeros(&spec), &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let (spec, mut params) = one_by_one(0.0, 0.0, Activation::Linear);
        let mut grads = ModelParams::zeros(&spec);
        grads.layers[0].weights[0] = 1.0;
        let mut state = AdamState::new(&spec, 1e-4).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();
        let w = params.layers[0].weights[0];
        assert!((w + 1e-4).abs() < 1e-12, "{w}");
        assert_eq!(params.layers[0].bias[0], 0.0);
    }

    #[test]
    fn adam_matches_scripted_recurrence() {
        let (spec, mut params) = one_by_one(0.5, 0.0, Activation::Linear);
        let mut grads = ModelParams::zeros(&spec);
        grads.layers[0].weights[0] = 0.7;
        let mut state = AdamState::new(&spec, 1e-3).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();
        adam_step(&mut params, &grads, &mut state).unwrap();

        let (mut p, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * 0.7;
            v = 0.999 * v + 0.001 * 0.49;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= 1e-3 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((params.layers[0].weights[0] - p).abs() < 1e-12);
    }

    #[test]
    fn adam_reports_non_finite_gradient_layer() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Relu, Activation::Linear).unwrap();
        let mut params = ModelParams::zeros(&spec);
        let mut grads = ModelParams::zeros(&spec);
        grads.layers[1].bias[0] = f64::NAN;
        let mut state = AdamState::new(&spec, 1e-4).unwrap();
        let err = adam_step(&mut params, &grads, &mut state).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 1, .. }));
        assert_eq!(state.step_count(), 0);
    }
}
