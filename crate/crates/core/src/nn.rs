//! Small dense network: affine layers with GELU and inverted dropout, manual
//! reverse-mode gradients (parameters and input), weighted cross-entropy, Adam.
//!
//! Rows of every batch matrix are samples. Weights are stored `in x out`, so a
//! layer computes `X W + b`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidParam("layer widths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParam("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<MlpParams> {
        spec.validate()?;
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|p| {
                let bound = 1.0 / (p[0] as f64).sqrt();
                let w = Array2::from_shape_simple_fn((p[0], p[1]), || rng.random_range(-bound..bound));
                let b = Array1::from_shape_simple_fn(p[1], || rng.random_range(-bound..bound));
                Dense { w, b }
            })
            .collect();
        Ok(MlpParams { layers })
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Every weight and bias, layer by layer, as contiguous slices.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("contiguous")])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Dense { w, b } = l;
                [w.as_slice_mut().expect("standard layout"), b.as_slice_mut().expect("contiguous")]
            })
            .collect()
    }

    pub fn sum_sq(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

/// Batch forward pass. Dropout (inverted scaling) is applied after each hidden
/// GELU only when `training`.
pub fn forward<R: Rng + ?Sized>(
    params: &MlpParams,
    spec: &MlpSpec,
    x: &Array2<f64>,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, Cache)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Shape(format!("input has {} columns, network expects {}", x.ncols(), params.input_dim())));
    }
    let n = params.layers.len();
    let mut cache = Cache { inputs: Vec::with_capacity(n), pre: Vec::with_capacity(n), masks: Vec::with_capacity(n) };
    let mut h = x.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = h.dot(&layer.w) + &layer.b;
        cache.inputs.push(h);
        if i + 1 == n {
            cache.pre.push(Array2::zeros((0, 0)));
            cache.masks.push(None);
            return Ok((z, cache));
        }
        let mut a = z.mapv(gelu);
        let mask = if training && spec.dropout > 0.0 {
            let keep = 1.0 - spec.dropout;
            let m = Array2::from_shape_simple_fn(a.raw_dim(), || if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
            a *= &m;
            Some(m)
        } else {
            None
        };
        cache.pre.push(z);
        cache.masks.push(mask);
        h = a;
    }
    unreachable!("network has at least one layer")
}

/// Gradients of `sum(d_logits * logits)` with respect to every parameter and
/// to the input batch.
pub fn backward(params: &MlpParams, cache: &Cache, d_logits: &Array2<f64>) -> (MlpParams, Array2<f64>) {
    let mut grads = params.zeros_like();
    let mut d = d_logits.to_owned();
    for i in (0..params.layers.len()).rev() {
        if i + 1 < params.layers.len() {
            if let Some(m) = &cache.masks[i] {
                d *= m;
            }
            d.zip_mut_with(&cache.pre[i], |g, &z| *g *= gelu_grad(z));
        }
        // a transposed product can come back column-major
        grads.layers[i].w = cache.inputs[i].t().dot(&d).as_standard_layout().into_owned();
        grads.layers[i].b = d.sum_axis(Axis(0));
        d = d.dot(&params.layers[i].w.t());
    }
    (grads, d)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `-w[label] * log softmax(logits)[label]` and its gradient.
pub fn weighted_cross_entropy(logits: &[f64], label: usize, weights: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let w = weights[label];
    let loss = w * (lse - logits[label]);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    grad.iter_mut().for_each(|g| *g *= w);
    (loss, grad)
}

/// Adam with bias correction over a fixed list of parameter slices; each
/// slice may carry its own learning-rate multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr_mults: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), lr_mults.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for ((p, g), mult) in params.iter_mut().zip(grads).zip(lr_mults) {
            assert_eq!(p.len(), g.len());
            let lr = self.lr * mult;
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *pi -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
        assert_eq!(k, self.m.len(), "parameter count changed");
    }
}
