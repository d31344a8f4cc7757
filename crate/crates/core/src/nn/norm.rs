//! Channel normalization against tracked running statistics.
//!
//! Training-mode forwards normalize every example with the layer's
//! running per-channel statistics, which are constants for the duration
//! of one optimization step; the statistics observed on the step's full
//! batch are committed with momentum only after its backward passes.
//! This keeps every example independent of its batch mates, which is
//! what lets chunked gradient accumulation reproduce full-batch
//! gradients exactly regardless of chunk size, and it keeps per-example
//! mean/scale contrasts visible to the detector.
//!
//! A refresh replaces the running statistics with exact stream
//! statistics, one layer at a time from the input side so each layer is
//! measured under its upstream layers' final statistics; repeating the
//! refresh over the same stream is a no-op.

use ndarray::{Array1, Array4, ArrayD};

use super::Param;

#[derive(Debug, Clone)]
pub struct ChannelNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
    channels: usize,
    // Stream accumulators for running-statistic capture.
    capturing: bool,
    acc_sum: Array1<f64>,
    acc_sumsq: Array1<f64>,
    acc_count: f64,
}

pub struct NormCache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
}

impl ChannelNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        ChannelNorm {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(vec![channels]), false),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(vec![channels]), false),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
            momentum: 0.1,
            channels,
            capturing: false,
            acc_sum: Array1::zeros(channels),
            acc_sumsq: Array1::zeros(channels),
            acc_count: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Arm the stream accumulators; subsequent training-mode forwards add
    /// their input statistics until one of the commit calls.
    pub fn begin_capture(&mut self) {
        self.capturing = true;
        self.acc_sum.fill(0.0);
        self.acc_sumsq.fill(0.0);
        self.acc_count = 0.0;
    }

    pub fn is_capturing(&self) -> bool {
        self.capturing
    }

    fn captured_stats(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        if self.acc_count == 0.0 {
            return None;
        }
        let mean = &self.acc_sum / self.acc_count;
        let var = &self.acc_sumsq / self.acc_count - &mean * &mean;
        Some((mean, var.mapv(|v| v.max(0.0))))
    }

    /// Momentum update of the running statistics from the captured
    /// stream, as done once per training step.
    pub fn commit_momentum(&mut self) {
        if let Some((mean, var)) = self.captured_stats() {
            let m = self.momentum;
            self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
            self.running_var = &self.running_var * (1.0 - m) + &var * m;
        }
        self.capturing = false;
    }

    /// Momentum-free replacement of the running statistics with the
    /// captured stream statistics (normalization refresh).
    pub fn commit_exact(&mut self) {
        if let Some((mean, var)) = self.captured_stats() {
            self.running_mean = mean;
            self.running_var = var;
        }
        self.capturing = false;
    }

    fn normalize(&self, x: &Array4<f64>, cache: bool) -> (Array4<f64>, Option<NormCache>) {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.channels);
        let mut y = Array4::<f64>::zeros((n, c, h, w));
        let mut xhat = cache.then(|| Array4::<f64>::zeros((n, c, h, w)));
        let mut inv_std = Array1::<f64>::zeros(c);
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("standard layout");
        for ci in 0..c {
            let inv = 1.0 / (self.running_var[ci] + self.eps).sqrt();
            inv_std[ci] = inv;
            let (m, g, b) = (self.running_mean[ci], self.gamma.value[[ci]], self.beta.value[[ci]]);
            for ni in 0..n {
                let base = (ni * c + ci) * h * w;
                for i in 0..h * w {
                    let xh = (xs[base + i] - m) * inv;
                    if let Some(hh) = xhat.as_mut() {
                        hh.as_slice_mut().expect("standard layout")[base + i] = xh;
                    }
                    ys[base + i] = g * xh + b;
                }
            }
        }
        (y, cache.then(|| NormCache { xhat: xhat.expect("requested"), inv_std }))
    }

    /// Training-mode forward: normalize with the current running
    /// statistics (per-step constants) and, when armed, accumulate the
    /// input's per-channel statistics.
    pub fn forward_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, NormCache) {
        if self.capturing {
            let (n, c, h, w) = x.dim();
            let xs = x.as_slice().expect("standard layout");
            for ci in 0..c {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for ni in 0..n {
                    let base = (ni * c + ci) * h * w;
                    for &v in &xs[base..base + h * w] {
                        sum += v;
                        sumsq += v * v;
                    }
                }
                self.acc_sum[ci] += sum;
                self.acc_sumsq[ci] += sumsq;
            }
            self.acc_count += (n * h * w) as f64;
        }
        let (y, cache) = self.normalize(x, true);
        (y, cache.expect("cache requested"))
    }

    /// Inference-mode forward using the running statistics.
    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        self.normalize(x, false).0
    }

    /// Backward pass. The normalization statistics are per-step
    /// constants, so the input gradient is a plain rescale; gamma/beta
    /// gradients accumulate in place.
    pub fn backward(&mut self, cache: &NormCache, dy: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = dy.dim();
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        let ds = dy.as_slice().expect("standard layout");
        let hs = cache.xhat.as_slice().expect("standard layout");
        let dxs = dx.as_slice_mut().expect("standard layout");
        for ci in 0..c {
            let g = self.gamma.value[[ci]];
            let inv = cache.inv_std[ci];
            let mut dgamma = 0.0;
            let mut dbeta = 0.0;
            for ni in 0..n {
                let base = (ni * c + ci) * h * w;
                for i in base..base + h * w {
                    dgamma += ds[i] * hs[i];
                    dbeta += ds[i];
                    dxs[i] = ds[i] * g * inv;
                }
            }
            self.gamma.grad[[ci]] += dgamma;
            self.beta.grad[[ci]] += dbeta;
        }
        dx
    }
}
