//! Forward/backward pairs for every layer of the network.
//!
//! Layers are split into a parameter struct and a cache produced by
//! `forward`. `backward` consumes the cache, so a cache can feed at most one
//! backward pass; a cache that does not match the upstream gradient or the
//! current parameter shapes is rejected with [`Error::State`].
//!
//! The sequence layers (embedding, convolution, attention, pooling) work on
//! one statement at a time as `[time, channels]` matrices. Dropout, batch
//! normalization and dense layers work on `[batch, features]` matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{self, matmul, matmul_nt, matmul_tn, Tensor};
use crate::tokenizer::TokenId;

fn check_stale(what: &str, expected: &[usize], got: &[usize]) -> Result<()> {
    if expected != got {
        return Err(Error::State(format!(
            "{what}: cache was produced for shape {expected:?} but received {got:?}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Embedding

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// One row per vocabulary token.
    pub table: Tensor,
}

#[derive(Debug)]
pub struct EmbeddingCache {
    ids: Vec<usize>,
    table_shape: Vec<usize>,
}

impl EmbeddingParams {
    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    /// Row `t` of the output is `table[ids[t]]`.
    pub fn forward(&self, ids: &[TokenId]) -> Result<(Tensor, EmbeddingCache)> {
        let (vocab, dim) = self.table.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * dim);
        let mut idx = Vec::with_capacity(ids.len());
        for &id in ids {
            let i = id.index();
            if i >= vocab {
                return Err(Error::Index { index: i, size: vocab });
            }
            out.extend_from_slice(self.table.row(i));
            idx.push(i);
        }
        let out = Tensor::new(vec![ids.len(), dim], out)?;
        Ok((
            out,
            EmbeddingCache {
                ids: idx,
                table_shape: self.table.shape().to_vec(),
            },
        ))
    }

    /// Gradient with respect to the table.
    pub fn backward(&self, cache: EmbeddingCache, upstream: &Tensor) -> Result<Tensor> {
        let mut grad = Tensor::zeros(self.table.shape());
        self.backward_into(cache, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Adds the table gradient into `grad`; rows of repeated ids accumulate.
    pub fn backward_into(&self, cache: EmbeddingCache, upstream: &Tensor, grad: &mut Tensor) -> Result<()> {
        check_stale("embedding", &cache.table_shape, self.table.shape())?;
        check_stale("embedding", &[cache.ids.len(), self.dim()], upstream.shape())?;
        grad.same_shape(&self.table, "embedding gradient")?;
        for (t, &i) in cache.ids.iter().enumerate() {
            for (g, u) in grad.row_mut(i).iter_mut().zip(upstream.row(t)) {
                *g += u;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Convolutional encoder

/// 1-D cross-correlation over time with zero "same" padding, stride 1,
/// followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoderParams {
    /// `[kernel_size, in_channels, out_channels]`
    pub kernels: Tensor,
    pub bias: Tensor,
}

#[derive(Debug)]
pub struct ConvCache {
    cols: Tensor,
    out: Tensor,
    in_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl ConvEncoderParams {
    pub fn new(kernels: Tensor, bias: Tensor) -> Result<Self> {
        let [k, _, out] = kernels.shape()[..] else {
            return Err(Error::shape(format!("conv kernels must be rank 3, got {:?}", kernels.shape())));
        };
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size {k} must be odd for same padding")));
        }
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "conv bias {:?} does not match {} output channels",
                bias.shape(),
                out
            )));
        }
        Ok(Self { kernels, bias })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn weight_matrix(&self) -> Tensor {
        let (k, c, o) = (self.kernel_size(), self.in_channels(), self.out_channels());
        self.kernels.clone().reshape(&[k * c, o]).expect("kernel reshape")
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (time, cin) = x.dims2()?;
        if cin != self.in_channels() {
            return Err(Error::shape(format!(
                "conv input {:?} does not match kernels {:?}",
                x.shape(),
                self.kernels.shape()
            )));
        }
        let k = self.kernel_size();
        let pad = k / 2;
        let mut cols = Tensor::zeros(&[time, k * cin]);
        for t in 0..time {
            let row = cols.row_mut(t);
            for tap in 0..k {
                let src = t + tap;
                if src < pad || src - pad >= time {
                    continue;
                }
                row[tap * cin..(tap + 1) * cin].copy_from_slice(x.row(src - pad));
            }
        }
        let mut out = matmul(&cols, &self.weight_matrix())?;
        let bias = self.bias.data();
        for t in 0..time {
            for (v, b) in out.row_mut(t).iter_mut().zip(bias) {
                *v = (*v + b).max(0.0);
            }
        }
        Ok((
            out.clone(),
            ConvCache {
                cols,
                out,
                in_channels: cin,
            },
        ))
    }

    pub fn backward(&self, cache: ConvCache, upstream: &Tensor) -> Result<(Tensor, ConvGrads)> {
        check_stale("conv", cache.out.shape(), upstream.shape())?;
        check_stale("conv", &[cache.in_channels], &[self.in_channels()])?;
        let mut dz = upstream.clone();
        for (d, &o) in dz.data_mut().iter_mut().zip(cache.out.data()) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
        let dw = matmul_tn(&cache.cols, &dz)?.reshape(self.kernels.shape())?;
        let db = dz.sum_axis0()?;
        let dcols = matmul_nt(&dz, &self.weight_matrix())?;

        let (time, _) = upstream.dims2()?;
        let (k, cin) = (self.kernel_size(), cache.in_channels);
        let pad = k / 2;
        let mut dx = Tensor::zeros(&[time, cin]);
        for t in 0..time {
            let drow = dcols.row(t);
            for tap in 0..k {
                let src = t + tap;
                if src < pad || src - pad >= time {
                    continue;
                }
                for (g, d) in dx.row_mut(src - pad).iter_mut().zip(&drow[tap * cin..(tap + 1) * cin]) {
                    *g += d;
                }
            }
        }
        Ok((dx, ConvGrads { kernels: dw, bias: db }))
    }
}

// ---------------------------------------------------------------------------
// Dot-product self-attention

/// `softmax(q·vᵀ)·v`, optionally with scores scaled by `1/sqrt(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Attention {
    pub scaled: bool,
}

#[derive(Debug)]
pub struct AttentionCache {
    q: Tensor,
    v: Tensor,
    weights: Tensor,
}

impl AttentionCache {
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

impl Attention {
    fn score_scale(&self, dim: usize) -> f64 {
        if self.scaled {
            1.0 / (dim as f64).sqrt()
        } else {
            1.0
        }
    }

    pub fn forward(&self, q: &Tensor, v: &Tensor) -> Result<(Tensor, AttentionCache)> {
        q.same_shape(v, "attention query/value")?;
        let (_, dim) = q.dims2()?;
        let mut scores = matmul_nt(q, v)?;
        scores.scale(self.score_scale(dim));
        let weights = tensor::softmax_rows(&scores)?;
        let out = matmul(&weights, v)?;
        Ok((
            out,
            AttentionCache {
                q: q.clone(),
                v: v.clone(),
                weights,
            },
        ))
    }

    /// Returns `(d_query, d_value)`.
    pub fn backward(&self, cache: AttentionCache, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
        check_stale("attention", cache.q.shape(), upstream.shape())?;
        let (time, dim) = cache.q.dims2()?;
        let scale = self.score_scale(dim);
        let p = &cache.weights;
        // out = P·V
        let dp = matmul_nt(upstream, &cache.v)?;
        let mut dv = matmul_tn(p, upstream)?;
        // softmax Jacobian, row by row
        let mut ds = Tensor::zeros(&[time, time]);
        for i in 0..time {
            let (pr, dpr) = (p.row(i), dp.row(i));
            let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
            for (s, (a, b)) in ds.row_mut(i).iter_mut().zip(pr.iter().zip(dpr)) {
                *s = a * (b - dot) * scale;
            }
        }
        let dq = matmul(&ds, &cache.v)?;
        dv.add_assign(&matmul_tn(&ds, &cache.q)?)?;
        Ok((dq, dv))
    }
}

// ---------------------------------------------------------------------------
// Global average pooling

#[derive(Debug)]
pub struct PoolCache {
    shape: Vec<usize>,
}

/// Mean over the time axis: `[time, d] -> [d]`.
pub fn global_avg_pool(x: &Tensor) -> Result<(Tensor, PoolCache)> {
    let out = tensor::mean_axis0(x)?;
    Ok((
        out,
        PoolCache {
            shape: x.shape().to_vec(),
        },
    ))
}

pub fn global_avg_pool_backward(cache: PoolCache, upstream: &Tensor) -> Result<Tensor> {
    let (time, dim) = (cache.shape[0], cache.shape[1]);
    check_stale("pool", &[dim], upstream.shape())?;
    let mut dx = Tensor::zeros(&cache.shape);
    let inv = 1.0 / time as f64;
    for t in 0..time {
        for (d, u) in dx.row_mut(t).iter_mut().zip(upstream.data()) {
            *d = u * inv;
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// Dropout

#[derive(Debug)]
pub struct DropoutCache {
    /// Per-element multiplier (0 or 1/(1-rate)); `None` in inference mode.
    mask: Option<Vec<f64>>,
    shape: Vec<usize>,
}

impl DropoutCache {
    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }
}

/// Inverted dropout: in training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1/(1-rate)`. Inference
/// mode is the identity.
pub fn dropout_forward(x: &Tensor, rate: f64, rng: &mut SeededRng, training: bool) -> Result<(Tensor, DropoutCache)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} must be in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutCache {
                mask: None,
                shape: x.shape().to_vec(),
            },
        ));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect();
    let mut out = x.clone();
    for (o, m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((
        out,
        DropoutCache {
            mask: Some(mask),
            shape: x.shape().to_vec(),
        },
    ))
}

pub fn dropout_backward(cache: DropoutCache, upstream: &Tensor) -> Result<Tensor> {
    check_stale("dropout", &cache.shape, upstream.shape())?;
    let mut dx = upstream.clone();
    if let Some(mask) = cache.mask {
        for (d, m) in dx.data_mut().iter_mut().zip(&mask) {
            *d *= m;
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// Batch normalization

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug)]
pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    training: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNormParams {
    /// `gamma = 1`, `beta = 0`, running mean 0 and running variance 1.
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::filled(&[dim], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Training mode normalizes with the batch mean and biased batch
    /// variance and folds the batch statistics into the running estimates;
    /// the running variance is fed the unbiased batch variance so it
    /// converges to the population variance. Inference mode normalizes with
    /// the running estimates and leaves them untouched.
    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Tensor, BatchNormCache)> {
        if !training {
            return self.infer(x);
        }
        let (b, d) = self.check_input(x)?;
        let (mean, var) = {
            if b < 2 {
                return Err(Error::BatchSize(b));
            }
            let mean = tensor::mean_axis0(x)?.into_data();
            let mut var = vec![0.0; d];
            for i in 0..b {
                for ((v, xv), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    *v += (xv - m) * (xv - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= b as f64);
            let mom = self.momentum;
            let unbiased = b as f64 / (b - 1) as f64;
            for j in 0..d {
                let rm = &mut self.running_mean.data_mut()[j];
                *rm = mom * *rm + (1.0 - mom) * mean[j];
                let rv = &mut self.running_var.data_mut()[j];
                *rv = mom * *rv + (1.0 - mom) * var[j] * unbiased;
            }
            (mean, var)
        };
        Ok(self.normalize(x, &mean, &var, true))
    }

    /// Inference-mode forward pass; never touches the running statistics.
    pub fn infer(&self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        self.check_input(x)?;
        Ok(self.normalize(x, self.running_mean.data(), self.running_var.data(), false))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (b, d) = x.dims2()?;
        if d != self.dim() {
            return Err(Error::shape(format!(
                "batchnorm input {:?} does not match {} features",
                x.shape(),
                self.dim()
            )));
        }
        Ok((b, d))
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], var: &[f64], training: bool) -> (Tensor, BatchNormCache) {
        let (b, _) = x.dims2().expect("checked");
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = x.clone();
        for i in 0..b {
            for (j, v) in xhat.row_mut(i).iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        let mut out = xhat.clone();
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for i in 0..b {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = gamma[j] * *v + beta[j];
            }
        }
        (out, BatchNormCache { xhat, inv_std, training })
    }

    pub fn backward(&self, cache: BatchNormCache, upstream: &Tensor) -> Result<(Tensor, BatchNormGrads)> {
        check_stale("batchnorm", cache.xhat.shape(), upstream.shape())?;
        let (b, d) = upstream.dims2()?;
        check_stale("batchnorm", &[cache.inv_std.len()], &[self.dim()])?;
        let gamma = self.gamma.data();
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for i in 0..b {
            for j in 0..d {
                let g = upstream.row(i)[j];
                dgamma[j] += g * cache.xhat.row(i)[j];
                dbeta[j] += g;
            }
        }
        let mut dx = Tensor::zeros(&[b, d]);
        if cache.training {
            // dx = inv_std/B * (B*dxhat - Σdxhat - xhat*Σ(dxhat*xhat)), dxhat = g*gamma
            let n = b as f64;
            for i in 0..b {
                for j in 0..d {
                    let dxhat = upstream.row(i)[j] * gamma[j];
                    let sum_dxhat = dbeta[j] * gamma[j];
                    let sum_dxhat_xhat = dgamma[j] * gamma[j];
                    dx.row_mut(i)[j] =
                        cache.inv_std[j] / n * (n * dxhat - sum_dxhat - cache.xhat.row(i)[j] * sum_dxhat_xhat);
                }
            }
        } else {
            for i in 0..b {
                for j in 0..d {
                    dx.row_mut(i)[j] = upstream.row(i)[j] * gamma[j] * cache.inv_std[j];
                }
            }
        }
        Ok((
            dx,
            BatchNormGrads {
                gamma: Tensor::vector(dgamma),
                beta: Tensor::vector(dbeta),
            },
        ))
    }
}

// ---------------------------------------------------------------------------
// Dense

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softmax,
    Linear,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Applies the activation to a `[batch, features]` matrix in place.
    pub fn apply(self, z: &mut Tensor) -> Result<()> {
        let (b, _) = z.dims2()?;
        match self {
            Activation::Tanh => z.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => (0..b).for_each(|i| tensor::softmax_in_place(z.row_mut(i))),
            Activation::Linear => {}
        }
        Ok(())
    }

    /// Maps a gradient with respect to the activation output `y` into one
    /// with respect to the pre-activation.
    pub fn backward(self, y: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        y.same_shape(upstream, "activation backward")?;
        let mut dz = upstream.clone();
        match self {
            Activation::Tanh => {
                for (d, &v) in dz.data_mut().iter_mut().zip(y.data()) {
                    *d *= 1.0 - v * v;
                }
            }
            Activation::Sigmoid => {
                for (d, &v) in dz.data_mut().iter_mut().zip(y.data()) {
                    *d *= v * (1.0 - v);
                }
            }
            Activation::Softmax => {
                let (b, _) = y.dims2()?;
                for i in 0..b {
                    let dot: f64 = y.row(i).iter().zip(upstream.row(i)).map(|(a, g)| a * g).sum();
                    for (d, (&p, &g)) in dz.row_mut(i).iter_mut().zip(y.row(i).iter().zip(upstream.row(i))) {
                        *d = p * (g - dot);
                    }
                }
            }
            Activation::Linear => {}
        }
        Ok(dz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[in_dim, out_dim]`
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug)]
pub struct DenseCache {
    x: Tensor,
    y: Tensor,
    activation: Activation,
}

impl DenseCache {
    pub fn out_width(&self) -> usize {
        self.y.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Pre-activation `x·W + b`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let (_, d) = x.dims2()?;
        if d != self.in_dim() {
            return Err(Error::shape(format!(
                "dense input {:?} does not match weights {:?}",
                x.shape(),
                self.weights.shape()
            )));
        }
        let mut z = matmul(x, &self.weights)?;
        let (b, _) = z.dims2()?;
        for i in 0..b {
            for (v, bias) in z.row_mut(i).iter_mut().zip(self.bias.data()) {
                *v += bias;
            }
        }
        Ok(z)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        self.forward_as(x, self.activation)
    }

    /// Forward pass with an activation other than the configured one.
    pub fn forward_as(&self, x: &Tensor, activation: Activation) -> Result<(Tensor, DenseCache)> {
        let mut y = self.logits(x)?;
        activation.apply(&mut y)?;
        Ok((
            y.clone(),
            DenseCache {
                x: x.clone(),
                y,
                activation,
            },
        ))
    }

    pub fn backward(&self, cache: DenseCache, upstream: &Tensor) -> Result<(Tensor, DenseGrads)> {
        check_stale("dense", cache.y.shape(), upstream.shape())?;
        check_stale("dense", &[cache.x.shape()[1], upstream.shape()[1]], self.weights.shape())?;
        let dz = cache.activation.backward(&cache.y, upstream)?;
        let dw = matmul_tn(&cache.x, &dz)?;
        let db = dz.sum_axis0()?;
        let dx = matmul_nt(&dz, &self.weights)?;
        Ok((dx, DenseGrads { weights: dw, bias: db }))
    }
}
