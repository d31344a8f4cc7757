//! Minimal f64 neural-network layers with explicit forward/backward
//! passes. The detector, classifier, and relational autoencoder are
//! wired by hand from these pieces; there is no dynamic graph.
//!
//! Gradients accumulate into each parameter's `grad` buffer in a fixed
//! order (chunk index ascending, example index ascending inside a
//! chunk), so chunked and full-batch backward passes agree to floating
//! point accumulation error.

mod conv;
mod linear;
mod norm;
mod ops;
mod optim;

pub use conv::{Conv2d, ConvCache};
pub use linear::{Linear, LinearCache};
pub use norm::{ChannelNorm, NormCache};
pub use ops::{
    avg_pool2, avg_pool2_backward, cross_entropy, global_avg_pool, global_avg_pool_backward,
    l2_normalize_rows, l2_normalize_rows_backward, relu, relu_backward, softmax_rows,
};
pub use optim::{AdamW, Sgd};

use ndarray::ArrayD;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One learnable tensor with its gradient and optimizer state slots.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// Momentum buffer (SGD) or first-moment estimate (AdamW).
    pub state_a: Option<ArrayD<f64>>,
    /// Second-moment estimate (AdamW).
    pub state_b: Option<ArrayD<f64>>,
    /// Whether decoupled weight decay applies to this tensor.
    pub decay: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>, decay: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.into(),
            value,
            grad,
            state_a: None,
            state_b: None,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// He-normal initialization for a tensor with the given fan-in.
pub fn he_normal<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> ArrayD<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    ArrayD::from_shape_fn(shape, |_| normal.sample(rng))
}

/// Simple view over every parameter of a container, used by optimizers,
/// checkpoints, and the gradient-equivalence tests.
pub trait ParamSet {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.params() {
            out.extend(p.grad.iter().cloned());
        }
        out
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in self.params() {
            out.extend(p.value.iter().cloned());
        }
        out
    }

    /// FNV-1a checksum over the exact parameter bits; used by the
    /// freeze/preservation contracts.
    fn value_checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for p in self.params() {
            for v in p.value.iter() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::rng::fnv1a64(&bytes)
    }
}
