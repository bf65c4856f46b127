use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matvec, matvec_t, outer_acc};
use super::{check_finite, check_len, NnError, ParamVector, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform init in `[-bound, bound]`.
pub(crate) fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("sized by shape")
}

/// `y = act(W x + b)` whose parameters live in a [`ParamVector`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    w: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseCache {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl Dense {
    /// Registers `name.w` / `name.b` in `params`, initialised like a
    /// PyTorch linear layer: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamVector,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = params.push(format!("{name}.w"), uniform_tensor(rng, &[outputs, inputs], bound));
        let b = params.push(format!("{name}.b"), uniform_tensor(rng, &[outputs], bound));
        Self {
            inputs,
            outputs,
            activation,
            w,
            b,
        }
    }

    pub fn weight_index(&self) -> usize {
        self.w
    }

    pub fn bias_index(&self) -> usize {
        self.b
    }

    pub fn forward(&self, params: &ParamVector, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
        check_len(self.inputs, x.len())?;
        check_finite(x, "dense input")?;
        let mut z = params.value(self.b).to_vec();
        matvec(params.value(self.w), self.outputs, self.inputs, x, &mut z);
        let y: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
        Ok((
            y.clone(),
            DenseCache {
                x: x.to_vec(),
                z,
                y,
            },
        ))
    }

    /// Accumulates `dL/dW`, `dL/db` into `params` and returns `dL/dx`.
    pub fn backward(&self, params: &mut ParamVector, cache: &DenseCache, dy: &[f64]) -> Vec<f64> {
        let dz: Vec<f64> = dy
            .iter()
            .zip(cache.z.iter().zip(&cache.y))
            .map(|(g, (&z, &y))| g * self.activation.derivative(z, y))
            .collect();
        outer_acc(params.grad_mut(self.w), self.outputs, self.inputs, &dz, &cache.x);
        for (gb, d) in params.grad_mut(self.b).iter_mut().zip(&dz) {
            *gb += d;
        }
        let mut dx = vec![0.0; self.inputs];
        matvec_t(params.value(self.w), self.outputs, self.inputs, &dz, &mut dx);
        dx
    }
}

/// Stack of dense layers owning its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub params: ParamVector,
    layers: Vec<Dense>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpCache {
    layers: Vec<DenseCache>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last `output`.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let mut params = ParamVector::new();
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(&mut params, &format!("{name}.l{i}"), sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { params, layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&self.params, &h)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, MlpCache { layers: caches }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut g = dy.to_vec();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            g = layer.backward(&mut self.params, c, &g);
        }
        g
    }
}
