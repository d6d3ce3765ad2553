use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Whether batch statistics or running statistics drive normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel affine parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Fold the batch statistics of a train-mode pass into the running ones.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * cache.mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * cache.var[c];
        }
    }
}

/// What the backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub mode: Mode,
    /// Statistics used for normalization (batch or running, per mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    inv_std: Vec<f64>,
    xhat: Tensor,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Visit the `(n, h, w)` slab of channel `c` in fixed order.
#[inline]
fn channel_slabs<'a>(t: &'a Tensor, c: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
    let s = t.shape();
    let plane = s.plane();
    (0..s.n).map(move |n| {
        let start = (n * s.c + c) * plane;
        &t.data()[start..start + plane]
    })
}

pub fn batchnorm2d(input: &Tensor, state: &BatchNormState, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
    let s = input.shape();
    if s.c != state.channels() {
        return Err(Error::shape(format!(
            "batchnorm2d: input has {} channels but state has {} (dimension C)",
            s.c,
            state.channels()
        )));
    }
    let count = s.n * s.plane();
    let (mean, var) = match mode {
        Mode::Train => {
            if count < 2 {
                return Err(Error::invalid(format!(
                    "batchnorm2d: train mode needs at least 2 values per channel, got {count}"
                )));
            }
            let mut mean = vec![0.0; s.c];
            let mut var = vec![0.0; s.c];
            for c in 0..s.c {
                let sum: f64 = channel_slabs(input, c).flat_map(|sl| sl.iter()).sum();
                let mu = sum / count as f64;
                let sq: f64 = channel_slabs(input, c).flat_map(|sl| sl.iter()).map(|x| (x - mu) * (x - mu)).sum();
                mean[c] = mu;
                var[c] = sq / count as f64;
            }
            (mean, var)
        }
        Mode::Infer => (state.running_mean.clone(), state.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let plane = s.plane();
    let mut xhat = Tensor::zeros(s);
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let start = (n * s.c + c) * plane;
            let src = &input.data()[start..start + plane];
            let xh = &mut xhat.data_mut()[start..start + plane];
            for (d, &x) in xh.iter_mut().zip(src) {
                *d = (x - mean[c]) * inv_std[c];
            }
            let (g, b) = (state.gamma[c], state.beta[c]);
            let xh = &xhat.data()[start..start + plane];
            for (o, &x) in out.data_mut()[start..start + plane].iter_mut().zip(xh) {
                *o = g * x + b;
            }
        }
    }
    Ok((out, BatchNormCache { mode, mean, var, inv_std, xhat }))
}

pub fn batchnorm2d_backward(cache: &BatchNormCache, state: &BatchNormState, grad_out: &Tensor) -> Result<BatchNormGrads> {
    let s = grad_out.shape();
    if s != cache.xhat.shape() {
        return Err(Error::shape(format!(
            "batchnorm2d_backward: gradient {s} does not match forward input {}",
            cache.xhat.shape()
        )));
    }
    let plane = s.plane();
    let count = (s.n * plane) as f64;
    let mut gamma = vec![0.0; s.c];
    let mut beta = vec![0.0; s.c];
    for c in 0..s.c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (dy, xh) in channel_slabs(grad_out, c).zip(channel_slabs(&cache.xhat, c)) {
            for (&g, &x) in dy.iter().zip(xh) {
                sum_dy += g;
                sum_dy_xhat += g * x;
            }
        }
        beta[c] = sum_dy;
        gamma[c] = sum_dy_xhat;
    }
    let mut input = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let start = (n * s.c + c) * plane;
            let g = state.gamma[c];
            let k = cache.inv_std[c];
            let dst = &mut input.data_mut()[start..start + plane];
            let dy = &grad_out.data()[start..start + plane];
            let xh = &cache.xhat.data()[start..start + plane];
            match cache.mode {
                Mode::Train => {
                    let (mean_dy, mean_dy_xhat) = (beta[c] / count, gamma[c] / count);
                    for i in 0..plane {
                        dst[i] = g * k * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
                    }
                }
                Mode::Infer => {
                    for i in 0..plane {
                        dst[i] = g * k * dy[i];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads { input, gamma, beta })
}
