//! Fully connected network with a sigmoid output unit, trained by
//! mini-batch SGD on log-loss.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_binary_labels, clamp_probability, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation and activation.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// `A = act(A_prev W^T + b)`; `weights` is `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            hidden_activation: Activation::Relu,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Hidden layers followed by a single sigmoid output unit.
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Mlp {
    /// Randomly initialised network: He-uniform for ReLU layers,
    /// Glorot-uniform otherwise.
    pub fn new(
        n_inputs: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_inputs == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n_layers = sizes.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let activation = if l + 1 == n_layers {
                    Activation::Sigmoid
                } else {
                    hidden_activation
                };
                let limit = if activation == Activation::Relu {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit));
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::invalid("network needs at least one layer"));
        };
        if last.weights.nrows() != 1 || last.activation != Activation::Sigmoid {
            return Err(Error::invalid("output layer must be a single sigmoid unit"));
        }
        for pair in layers.windows(2) {
            if pair[0].weights.nrows() != pair[1].weights.ncols() {
                return Err(Error::invalid("layer dimensions do not compose"));
            }
        }
        for l in &layers {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::invalid("bias length differs from layer width"));
            }
        }
        Ok(Self { layers })
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Pre-activations and activations of every layer; `activations[0]` is
    /// the input.
    fn forward_all(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = vec![x.to_owned()];
        for layer in &self.layers {
            let z = act.last().unwrap().dot(&layer.weights.t()) + &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    /// Raw network outputs (before clamping).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let (_, act) = self.forward_all(x);
        Ok(act.last().unwrap().column(0).to_vec())
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.into_iter().map(clamp_probability).collect())
    }

    /// Mean log-loss of a batch and its gradient for every layer.
    ///
    /// The loss is evaluated on the output logit, so it stays finite and
    /// differentiable even for saturated outputs.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[u8],
    ) -> (f64, Vec<LayerGradient>) {
        let n = x.nrows() as f64;
        let (pre, act) = self.forward_all(x);
        let logits = pre.last().unwrap();
        let probs = act.last().unwrap();

        let mut loss = 0.0;
        let mut delta = Array2::zeros((x.nrows(), 1));
        for i in 0..x.nrows() {
            let z = logits[[i, 0]];
            let yi = f64::from(y[i]);
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z;
            // d(loss)/d(logit) for sigmoid + log-loss
            delta[[i, 0]] = (probs[[i, 0]] - yi) / n;
        }
        loss /= n;

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&act[l]);
            let gb = delta.sum_axis(Axis(0));
            grads.push(LayerGradient {
                weights: gw,
                bias: gb,
            });
            if l > 0 {
                let below = &self.layers[l - 1];
                let mut back = delta.dot(&self.layers[l].weights);
                ndarray::Zip::from(&mut back)
                    .and(&pre[l - 1])
                    .and(&act[l])
                    .for_each(|d, &z, &a| *d *= below.activation.derivative(z, a));
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    fn sgd_step(&mut self, grads: &[LayerGradient], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }
}

pub fn train_mlp(x: ArrayView2<'_, f64>, y: &[u8], opts: &MlpOptions) -> Result<Mlp> {
    check_binary_labels(x.nrows(), y)?;
    if !(opts.learning_rate > 0.0) || opts.batch_size == 0 {
        return Err(Error::invalid("learning rate and batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut net = Mlp::new(x.ncols(), &opts.hidden, opts.hidden_activation, &mut rng)?;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let (_, grads) = net.loss_and_gradients(xb.view(), &yb);
            net.sgd_step(&grads, opts.learning_rate);
        }
    }
    Ok(net)
}
