//! The grader network: a shared convolutional self-attention trunk that
//! ends in a small tanh bottleneck, and three output heads that all read
//! the same bottleneck activations.
//!
//! Per statement the trunk computes
//!
//! ```text
//! ids -> embedding -> conv_q ─┬───────────────> avg-pool ─┐
//!                  -> conv_v ─┴─> attention ──> avg-pool ─┴─> concat
//! ```
//!
//! and over the batch `concat -> dropout -> batchnorm -> dense(tanh)`.
//! Each head is `batchnorm -> dense`: C (1 unit, sigmoid), R (one unit per
//! remark class), G (1 unit, sigmoid).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    self, Activation, Attention, AttentionCache, BatchNormCache, BatchNormParams, ConvCache, ConvEncoderParams,
    DenseCache, DenseParams, DropoutCache, EmbeddingCache, EmbeddingParams, PoolCache,
};
use crate::rng::SeededRng;
use crate::tensor::{glorot_init, Tensor};
use crate::tokenizer::{EncodedStatement, SEQ_LEN};

/// How head R turns its logits into remark scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RemarkHead {
    /// One distribution over the classes (per-head training with
    /// categorical cross entropy).
    #[default]
    Softmax,
    /// Independent per-class probabilities (joint training with binary
    /// cross entropy over all output units).
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub dropout_rate: f64,
    pub bottleneck_dim: usize,
    pub remark_classes: usize,
    pub attention_scaled: bool,
    pub remark_head: RemarkHead,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        Self {
            vocab_size,
            seq_len: SEQ_LEN,
            embed_dim: 64,
            conv_filters: 100,
            conv_kernel: 3,
            dropout_rate: 0.25,
            bottleneck_dim: 2,
            remark_classes: 4,
            attention_scaled: false,
            remark_head: RemarkHead::Softmax,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_len", self.seq_len),
            ("embed_dim", self.embed_dim),
            ("conv_filters", self.conv_filters),
            ("bottleneck_dim", self.bottleneck_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config(format!("vocab_size {} must be at least 2", self.vocab_size)));
        }
        if self.conv_kernel == 0 || self.conv_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("conv_kernel {} must be odd", self.conv_kernel)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} must be in [0, 1)", self.dropout_rate)));
        }
        if self.remark_classes != 4 {
            return Err(Error::Config(format!(
                "remark_classes must be 4 (one per remark), got {}",
                self.remark_classes
            )));
        }
        Ok(())
    }

    /// Width of the pooled trunk vector (pooled query encoding plus pooled
    /// attention output).
    pub fn pooled_dim(&self) -> usize {
        2 * self.conv_filters
    }

    /// Number of stored scalars, including batch-norm running statistics.
    pub fn param_count(&self) -> usize {
        let head = |out: usize| 4 * self.bottleneck_dim + self.bottleneck_dim * out + out;
        self.vocab_size * self.embed_dim
            + 2 * (self.conv_kernel * self.embed_dim * self.conv_filters + self.conv_filters)
            + 4 * self.pooled_dim()
            + self.pooled_dim() * self.bottleneck_dim
            + self.bottleneck_dim
            + head(1)
            + head(self.remark_classes)
            + head(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub bn: BatchNormParams,
    pub dense: DenseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraderNet {
    pub config: ModelConfig,
    pub embedding: EmbeddingParams,
    pub conv_q: ConvEncoderParams,
    pub conv_v: ConvEncoderParams,
    pub trunk_bn: BatchNormParams,
    pub bottleneck: DenseParams,
    pub head_c: Head,
    pub head_r: Head,
    pub head_g: Head,
}

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Trunk,
    HeadC,
    HeadR,
    HeadG,
}

/// Trainable parameter tensors, in the fixed order used for gradients and
/// optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Embedding,
    ConvQKernels,
    ConvQBias,
    ConvVKernels,
    ConvVBias,
    TrunkBnGamma,
    TrunkBnBeta,
    BottleneckWeights,
    BottleneckBias,
    HeadCBnGamma,
    HeadCBnBeta,
    HeadCWeights,
    HeadCBias,
    HeadRBnGamma,
    HeadRBnBeta,
    HeadRWeights,
    HeadRBias,
    HeadGBnGamma,
    HeadGBnBeta,
    HeadGWeights,
    HeadGBias,
}

impl Param {
    pub const ALL: [Param; 21] = [
        Param::Embedding,
        Param::ConvQKernels,
        Param::ConvQBias,
        Param::ConvVKernels,
        Param::ConvVBias,
        Param::TrunkBnGamma,
        Param::TrunkBnBeta,
        Param::BottleneckWeights,
        Param::BottleneckBias,
        Param::HeadCBnGamma,
        Param::HeadCBnBeta,
        Param::HeadCWeights,
        Param::HeadCBias,
        Param::HeadRBnGamma,
        Param::HeadRBnBeta,
        Param::HeadRWeights,
        Param::HeadRBias,
        Param::HeadGBnGamma,
        Param::HeadGBnBeta,
        Param::HeadGWeights,
        Param::HeadGBias,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Embedding => "embedding.table",
            Param::ConvQKernels => "conv_q.kernels",
            Param::ConvQBias => "conv_q.bias",
            Param::ConvVKernels => "conv_v.kernels",
            Param::ConvVBias => "conv_v.bias",
            Param::TrunkBnGamma => "trunk_bn.gamma",
            Param::TrunkBnBeta => "trunk_bn.beta",
            Param::BottleneckWeights => "bottleneck.weights",
            Param::BottleneckBias => "bottleneck.bias",
            Param::HeadCBnGamma => "head_c.bn.gamma",
            Param::HeadCBnBeta => "head_c.bn.beta",
            Param::HeadCWeights => "head_c.dense.weights",
            Param::HeadCBias => "head_c.dense.bias",
            Param::HeadRBnGamma => "head_r.bn.gamma",
            Param::HeadRBnBeta => "head_r.bn.beta",
            Param::HeadRWeights => "head_r.dense.weights",
            Param::HeadRBias => "head_r.dense.bias",
            Param::HeadGBnGamma => "head_g.bn.gamma",
            Param::HeadGBnBeta => "head_g.bn.beta",
            Param::HeadGWeights => "head_g.dense.weights",
            Param::HeadGBias => "head_g.dense.bias",
        }
    }

    pub fn group(self) -> ParamGroup {
        match self.index() {
            0..=8 => ParamGroup::Trunk,
            9..=12 => ParamGroup::HeadC,
            13..=16 => ParamGroup::HeadR,
            _ => ParamGroup::HeadG,
        }
    }
}

/// What a forward pass produces and, in training, what is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// `[C | R... | G]`, every unit through a sigmoid.
    Joint,
    /// Head C alone, sigmoid.
    Correctness,
    /// Head R alone, softmax.
    Remark,
    /// Head G alone, sigmoid.
    Grade,
}

impl Objective {
    pub fn label(self) -> &'static str {
        match self {
            Objective::Joint => "joint",
            Objective::Correctness => "C",
            Objective::Remark => "R",
            Objective::Grade => "G",
        }
    }

    pub fn groups(self) -> &'static [ParamGroup] {
        match self {
            Objective::Joint => &[ParamGroup::Trunk, ParamGroup::HeadC, ParamGroup::HeadR, ParamGroup::HeadG],
            Objective::Correctness => &[ParamGroup::Trunk, ParamGroup::HeadC],
            Objective::Remark => &[ParamGroup::Trunk, ParamGroup::HeadR],
            Objective::Grade => &[ParamGroup::Trunk, ParamGroup::HeadG],
        }
    }
}

/// Gradients for every trainable tensor, indexed by [`Param::index`].
/// Tensors of groups that took no part in a pass are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &GraderNet) -> Self {
        Self {
            tensors: Param::ALL.iter().map(|&p| Tensor::zeros(net.param(p).shape())).collect(),
        }
    }

    pub fn get(&self, p: Param) -> &Tensor {
        &self.tensors[p.index()]
    }

    pub fn get_mut(&mut self, p: Param) -> &mut Tensor {
        &mut self.tensors[p.index()]
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().map(Tensor::max_abs).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_correct: f64,
    pub remark_probs: Vec<f64>,
    pub grade_hat: f64,
    pub bottleneck: Vec<f64>,
}

impl Prediction {
    pub fn remark_argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.remark_probs.iter().enumerate() {
            if p > self.remark_probs[best] {
                best = i;
            }
        }
        best
    }
}

struct StatementCache {
    embedding: EmbeddingCache,
    conv_q: ConvCache,
    conv_v: ConvCache,
    attention: AttentionCache,
    pool_q: PoolCache,
    pool_a: PoolCache,
}

/// Everything a training forward pass stores for its backward pass.
pub struct ForwardCache {
    objective: Objective,
    statements: Vec<StatementCache>,
    dropout: DropoutCache,
    trunk_bn: BatchNormCache,
    bottleneck: DenseCache,
    heads: Vec<(ParamGroup, BatchNormCache, DenseCache)>,
    batch: usize,
}

/// The trunk's batch-level stages, kept so a step-by-step oracle can
/// inspect them.
pub struct TrunkOutput {
    pub pooled: Tensor,
    pub bottleneck: Tensor,
}

impl GraderNet {
    /// Glorot-uniform weights, zero biases, `gamma = 1`, `beta = 0`.
    pub fn build(config: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let embedding = EmbeddingParams {
            table: glorot_init(&[c.vocab_size, c.embed_dim], rng)?,
        };
        let conv = |rng: &mut SeededRng| -> Result<ConvEncoderParams> {
            ConvEncoderParams::new(
                glorot_init(&[c.conv_kernel, c.embed_dim, c.conv_filters], rng)?,
                Tensor::zeros(&[c.conv_filters]),
            )
        };
        let conv_q = conv(rng)?;
        let conv_v = conv(rng)?;
        let dense = |inp: usize, out: usize, activation: Activation, rng: &mut SeededRng| -> Result<DenseParams> {
            Ok(DenseParams {
                weights: glorot_init(&[inp, out], rng)?,
                bias: Tensor::zeros(&[out]),
                activation,
            })
        };
        let bottleneck = dense(c.pooled_dim(), c.bottleneck_dim, Activation::Tanh, rng)?;
        let head = |out: usize, act: Activation, rng: &mut SeededRng| -> Result<Head> {
            Ok(Head {
                bn: BatchNormParams::new(c.bottleneck_dim),
                dense: dense(c.bottleneck_dim, out, act, rng)?,
            })
        };
        let head_c = head(1, Activation::Sigmoid, rng)?;
        let head_r = head(c.remark_classes, Activation::Softmax, rng)?;
        let head_g = head(1, Activation::Sigmoid, rng)?;
        let mut net = Self {
            trunk_bn: BatchNormParams::new(c.pooled_dim()),
            config,
            embedding,
            conv_q,
            conv_v,
            bottleneck,
            head_c,
            head_r,
            head_g,
        };
        net.set_remark_head(net.config.remark_head);
        Ok(net)
    }

    pub fn set_remark_head(&mut self, mode: RemarkHead) {
        self.config.remark_head = mode;
        self.head_r.dense.activation = match mode {
            RemarkHead::Softmax => Activation::Softmax,
            RemarkHead::Sigmoid => Activation::Sigmoid,
        };
    }

    pub fn param(&self, p: Param) -> &Tensor {
        match p {
            Param::Embedding => &self.embedding.table,
            Param::ConvQKernels => &self.conv_q.kernels,
            Param::ConvQBias => &self.conv_q.bias,
            Param::ConvVKernels => &self.conv_v.kernels,
            Param::ConvVBias => &self.conv_v.bias,
            Param::TrunkBnGamma => &self.trunk_bn.gamma,
            Param::TrunkBnBeta => &self.trunk_bn.beta,
            Param::BottleneckWeights => &self.bottleneck.weights,
            Param::BottleneckBias => &self.bottleneck.bias,
            Param::HeadCBnGamma => &self.head_c.bn.gamma,
            Param::HeadCBnBeta => &self.head_c.bn.beta,
            Param::HeadCWeights => &self.head_c.dense.weights,
            Param::HeadCBias => &self.head_c.dense.bias,
            Param::HeadRBnGamma => &self.head_r.bn.gamma,
            Param::HeadRBnBeta => &self.head_r.bn.beta,
            Param::HeadRWeights => &self.head_r.dense.weights,
            Param::HeadRBias => &self.head_r.dense.bias,
            Param::HeadGBnGamma => &self.head_g.bn.gamma,
            Param::HeadGBnBeta => &self.head_g.bn.beta,
            Param::HeadGWeights => &self.head_g.dense.weights,
            Param::HeadGBias => &self.head_g.dense.bias,
        }
    }

    pub fn param_mut(&mut self, p: Param) -> &mut Tensor {
        match p {
            Param::Embedding => &mut self.embedding.table,
            Param::ConvQKernels => &mut self.conv_q.kernels,
            Param::ConvQBias => &mut self.conv_q.bias,
            Param::ConvVKernels => &mut self.conv_v.kernels,
            Param::ConvVBias => &mut self.conv_v.bias,
            Param::TrunkBnGamma => &mut self.trunk_bn.gamma,
            Param::TrunkBnBeta => &mut self.trunk_bn.beta,
            Param::BottleneckWeights => &mut self.bottleneck.weights,
            Param::BottleneckBias => &mut self.bottleneck.bias,
            Param::HeadCBnGamma => &mut self.head_c.bn.gamma,
            Param::HeadCBnBeta => &mut self.head_c.bn.beta,
            Param::HeadCWeights => &mut self.head_c.dense.weights,
            Param::HeadCBias => &mut self.head_c.dense.bias,
            Param::HeadRBnGamma => &mut self.head_r.bn.gamma,
            Param::HeadRBnBeta => &mut self.head_r.bn.beta,
            Param::HeadRWeights => &mut self.head_r.dense.weights,
            Param::HeadRBias => &mut self.head_r.dense.bias,
            Param::HeadGBnGamma => &mut self.head_g.bn.gamma,
            Param::HeadGBnBeta => &mut self.head_g.bn.beta,
            Param::HeadGWeights => &mut self.head_g.dense.weights,
            Param::HeadGBias => &mut self.head_g.dense.bias,
        }
    }

    /// Every stored tensor by name: the trainable parameters followed by the
    /// batch-norm running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Param::ALL.iter().map(|&p| (p.name().to_string(), self.param(p))).collect();
        for (prefix, bn) in self.batch_norms() {
            out.push((format!("{prefix}.running_mean"), &bn.running_mean));
            out.push((format!("{prefix}.running_var"), &bn.running_var));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let GraderNet {
            embedding,
            conv_q,
            conv_v,
            trunk_bn,
            bottleneck,
            head_c,
            head_r,
            head_g,
            ..
        } = self;
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("embedding.table".into(), &mut embedding.table),
            ("conv_q.kernels".into(), &mut conv_q.kernels),
            ("conv_q.bias".into(), &mut conv_q.bias),
            ("conv_v.kernels".into(), &mut conv_v.kernels),
            ("conv_v.bias".into(), &mut conv_v.bias),
            ("trunk_bn.gamma".into(), &mut trunk_bn.gamma),
            ("trunk_bn.beta".into(), &mut trunk_bn.beta),
            ("bottleneck.weights".into(), &mut bottleneck.weights),
            ("bottleneck.bias".into(), &mut bottleneck.bias),
        ];
        let mut stats: Vec<(String, &mut Tensor)> = vec![
            ("trunk_bn.running_mean".into(), &mut trunk_bn.running_mean),
            ("trunk_bn.running_var".into(), &mut trunk_bn.running_var),
        ];
        for (prefix, head) in [("head_c", head_c), ("head_r", head_r), ("head_g", head_g)] {
            let Head { bn, dense } = head;
            out.push((format!("{prefix}.bn.gamma"), &mut bn.gamma));
            out.push((format!("{prefix}.bn.beta"), &mut bn.beta));
            out.push((format!("{prefix}.dense.weights"), &mut dense.weights));
            out.push((format!("{prefix}.dense.bias"), &mut dense.bias));
            stats.push((format!("{prefix}.bn.running_mean"), &mut bn.running_mean));
            stats.push((format!("{prefix}.bn.running_var"), &mut bn.running_var));
        }
        out.extend(stats);
        out
    }

    fn batch_norms(&self) -> [(&'static str, &BatchNormParams); 4] {
        [
            ("trunk_bn", &self.trunk_bn),
            ("head_c.bn", &self.head_c.bn),
            ("head_r.bn", &self.head_r.bn),
            ("head_g.bn", &self.head_g.bn),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn head(&self, group: ParamGroup) -> &Head {
        match group {
            ParamGroup::HeadC => &self.head_c,
            ParamGroup::HeadR => &self.head_r,
            ParamGroup::HeadG => &self.head_g,
            ParamGroup::Trunk => unreachable!("trunk is not a head"),
        }
    }

    fn head_mut(&mut self, group: ParamGroup) -> &mut Head {
        match group {
            ParamGroup::HeadC => &mut self.head_c,
            ParamGroup::HeadR => &mut self.head_r,
            ParamGroup::HeadG => &mut self.head_g,
            ParamGroup::Trunk => unreachable!("trunk is not a head"),
        }
    }

    fn check_statement(&self, s: &EncodedStatement) -> Result<()> {
        if s.len() != self.config.seq_len {
            return Err(Error::shape(format!(
                "statement has {} positions, model expects {}",
                s.len(),
                self.config.seq_len
            )));
        }
        Ok(())
    }

    /// Per-statement part of the trunk: `[pooled_q | pooled_attention]`.
    fn encode_statement(&self, s: &EncodedStatement) -> Result<(Vec<f64>, StatementCache)> {
        self.check_statement(s)?;
        let (emb, embedding) = self.embedding.forward(s.ids())?;
        let (q, conv_q) = self.conv_q.forward(&emb)?;
        let (v, conv_v) = self.conv_v.forward(&emb)?;
        let attn = Attention {
            scaled: self.config.attention_scaled,
        };
        let (a, attention) = attn.forward(&q, &v)?;
        let (pq, pool_q) = layers::global_avg_pool(&q)?;
        let (pa, pool_a) = layers::global_avg_pool(&a)?;
        let mut pooled = pq.into_data();
        pooled.extend_from_slice(pa.data());
        Ok((
            pooled,
            StatementCache {
                embedding,
                conv_q,
                conv_v,
                attention,
                pool_q,
                pool_a,
            },
        ))
    }

    fn statement_backward(&self, cache: StatementCache, d_pooled: &[f64], grads: &mut Gradients) -> Result<()> {
        let f = self.config.conv_filters;
        let dq_pool = Tensor::vector(d_pooled[..f].to_vec());
        let da_pool = Tensor::vector(d_pooled[f..].to_vec());
        let da = layers::global_avg_pool_backward(cache.pool_a, &da_pool)?;
        let attn = Attention {
            scaled: self.config.attention_scaled,
        };
        let (mut dq, dv) = attn.backward(cache.attention, &da)?;
        dq.add_assign(&layers::global_avg_pool_backward(cache.pool_q, &dq_pool)?)?;
        let (mut demb, gq) = self.conv_q.backward(cache.conv_q, &dq)?;
        let (demb_v, gv) = self.conv_v.backward(cache.conv_v, &dv)?;
        demb.add_assign(&demb_v)?;
        grads.get_mut(Param::ConvQKernels).add_assign(&gq.kernels)?;
        grads.get_mut(Param::ConvQBias).add_assign(&gq.bias)?;
        grads.get_mut(Param::ConvVKernels).add_assign(&gv.kernels)?;
        grads.get_mut(Param::ConvVBias).add_assign(&gv.bias)?;
        self.embedding
            .backward_into(cache.embedding, &demb, grads.get_mut(Param::Embedding))
    }

    /// Pooled trunk vectors for a batch, `[B, 2·filters]`.
    pub fn pooled(&self, batch: &[EncodedStatement]) -> Result<Tensor> {
        let rows = batch
            .iter()
            .map(|s| self.encode_statement(s).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_rows(&rows)
    }

    /// Bottleneck activations `[B, bottleneck_dim]`. Training mode applies
    /// dropout and updates the trunk batch-norm running statistics.
    pub fn forward_trunk(&mut self, batch: &[EncodedStatement], training: bool, rng: &mut SeededRng) -> Result<Tensor> {
        if training {
            let (z, _, _, _, _) = self.trunk_train(batch, rng)?;
            Ok(z)
        } else {
            Ok(self.trunk_infer(batch)?.bottleneck)
        }
    }

    /// Inference-mode trunk; never mutates the network.
    pub fn trunk_infer(&self, batch: &[EncodedStatement]) -> Result<TrunkOutput> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let pooled = self.pooled(batch)?;
        let (normed, _) = self.trunk_bn.infer(&pooled)?;
        let (bottleneck, _) = self.bottleneck.forward(&normed)?;
        Ok(TrunkOutput { pooled, bottleneck })
    }

    #[allow(clippy::type_complexity)]
    fn trunk_train(
        &mut self,
        batch: &[EncodedStatement],
        rng: &mut SeededRng,
    ) -> Result<(Tensor, Vec<StatementCache>, DropoutCache, BatchNormCache, DenseCache)> {
        if batch.len() < 2 {
            return Err(Error::BatchSize(batch.len()));
        }
        let mut rows = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for s in batch {
            let (p, c) = self.encode_statement(s)?;
            rows.push(p);
            caches.push(c);
        }
        let pooled = Tensor::from_rows(&rows)?;
        let (dropped, dropout) = layers::dropout_forward(&pooled, self.config.dropout_rate, rng, true)?;
        let (normed, bn) = self.trunk_bn.forward(&dropped, true)?;
        let (z, dense) = self.bottleneck.forward(&normed)?;
        Ok((z, caches, dropout, bn, dense))
    }

    fn head_infer(&self, group: ParamGroup, z: &Tensor, activation: Activation) -> Result<Tensor> {
        let head = self.head(group);
        let (h, _) = head.bn.infer(z)?;
        Ok(head.dense.forward_as(&h, activation)?.0)
    }

    /// `[B, 2 + remark_classes]` joint output with a sigmoid on every unit.
    pub fn forward_joint(&mut self, batch: &[EncodedStatement], training: bool, rng: &mut SeededRng) -> Result<Tensor> {
        if training {
            Ok(self.forward_train(batch, Objective::Joint, rng)?.0)
        } else {
            self.joint_infer(batch)
        }
    }

    pub fn joint_infer(&self, batch: &[EncodedStatement]) -> Result<Tensor> {
        let z = self.trunk_infer(batch)?.bottleneck;
        let parts = [
            self.head_infer(ParamGroup::HeadC, &z, Activation::Sigmoid)?,
            self.head_infer(ParamGroup::HeadR, &z, Activation::Sigmoid)?,
            self.head_infer(ParamGroup::HeadG, &z, Activation::Sigmoid)?,
        ];
        concat_columns(&parts)
    }

    /// Inference-mode outputs for one statement. Remark scores follow the
    /// network's [`RemarkHead`] mode.
    pub fn predict(&self, statement: &EncodedStatement) -> Result<Prediction> {
        let batch = std::slice::from_ref(statement);
        let z = self.trunk_infer(batch)?.bottleneck;
        let c = self.head_infer(ParamGroup::HeadC, &z, Activation::Sigmoid)?;
        let r = self.head_infer(ParamGroup::HeadR, &z, self.head_r.dense.activation)?;
        let g = self.head_infer(ParamGroup::HeadG, &z, Activation::Sigmoid)?;
        Ok(Prediction {
            p_correct: c.data()[0],
            remark_probs: r.into_data(),
            grade_hat: g.data()[0],
            bottleneck: z.into_data(),
        })
    }

    /// [`predict`](Self::predict) for many statements, in parallel. Results
    /// do not depend on the number of threads.
    pub fn predict_batch(&self, statements: &[EncodedStatement]) -> Result<Vec<Prediction>> {
        statements.par_iter().map(|s| self.predict(s)).collect()
    }

    fn objective_activation(&self, objective: Objective, group: ParamGroup) -> Activation {
        match (objective, group) {
            (Objective::Joint, _) => Activation::Sigmoid,
            (_, ParamGroup::HeadR) => Activation::Softmax,
            _ => Activation::Sigmoid,
        }
    }

    /// Training-mode forward pass for one objective. Returns the objective's
    /// outputs and the cache for [`GraderNet::backward`].
    pub fn forward_train(
        &mut self,
        batch: &[EncodedStatement],
        objective: Objective,
        rng: &mut SeededRng,
    ) -> Result<(Tensor, ForwardCache)> {
        let (z, statements, dropout, trunk_bn, bottleneck) = self.trunk_train(batch, rng)?;
        let groups: &[ParamGroup] = match objective {
            Objective::Joint => &[ParamGroup::HeadC, ParamGroup::HeadR, ParamGroup::HeadG],
            Objective::Correctness => &[ParamGroup::HeadC],
            Objective::Remark => &[ParamGroup::HeadR],
            Objective::Grade => &[ParamGroup::HeadG],
        };
        let mut heads = Vec::with_capacity(groups.len());
        let mut parts = Vec::with_capacity(groups.len());
        for &group in groups {
            let act = self.objective_activation(objective, group);
            let head = self.head_mut(group);
            let (h, bn_cache) = head.bn.forward(&z, true)?;
            let (y, dense_cache) = head.dense.forward_as(&h, act)?;
            parts.push(y);
            heads.push((group, bn_cache, dense_cache));
        }
        let out = concat_columns(&parts)?;
        Ok((
            out,
            ForwardCache {
                objective,
                statements,
                dropout,
                trunk_bn,
                bottleneck,
                heads,
                batch: batch.len(),
            },
        ))
    }

    /// Backpropagates `d_output` (gradient of the loss with respect to the
    /// outputs of [`GraderNet::forward_train`]) through the active heads and
    /// the shared trunk.
    pub fn backward(&self, cache: ForwardCache, d_output: &Tensor) -> Result<Gradients> {
        let widths: Vec<usize> = cache.heads.iter().map(|(_, _, d)| d.out_width()).collect();
        let total: usize = widths.iter().sum();
        if d_output.shape() != [cache.batch, total] {
            return Err(Error::State(format!(
                "{} gradient {:?} does not match cached output [{}, {}]",
                cache.objective.label(),
                d_output.shape(),
                cache.batch,
                total
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut dz = Tensor::zeros(&[cache.batch, self.config.bottleneck_dim]);
        let mut col = 0;
        for ((group, bn_cache, dense_cache), width) in cache.heads.into_iter().zip(widths) {
            let d_part = slice_columns(d_output, col, width)?;
            col += width;
            let head = self.head(group);
            let (dh, dg) = head.dense.backward(dense_cache, &d_part)?;
            let (dzh, bg) = head.bn.backward(bn_cache, &dh)?;
            dz.add_assign(&dzh)?;
            let [gamma, beta, w, b] = head_params(group);
            grads.get_mut(gamma).add_assign(&bg.gamma)?;
            grads.get_mut(beta).add_assign(&bg.beta)?;
            grads.get_mut(w).add_assign(&dg.weights)?;
            grads.get_mut(b).add_assign(&dg.bias)?;
        }
        let (dnormed, bg) = self.bottleneck.backward(cache.bottleneck, &dz)?;
        *grads.get_mut(Param::BottleneckWeights) = bg.weights;
        *grads.get_mut(Param::BottleneckBias) = bg.bias;
        let (ddropped, tg) = self.trunk_bn.backward(cache.trunk_bn, &dnormed)?;
        *grads.get_mut(Param::TrunkBnGamma) = tg.gamma;
        *grads.get_mut(Param::TrunkBnBeta) = tg.beta;
        let dpooled = layers::dropout_backward(cache.dropout, &ddropped)?;
        for (i, sc) in cache.statements.into_iter().enumerate() {
            self.statement_backward(sc, dpooled.row(i), &mut grads)?;
        }
        Ok(grads)
    }
}

fn head_params(group: ParamGroup) -> [Param; 4] {
    match group {
        ParamGroup::HeadC => [Param::HeadCBnGamma, Param::HeadCBnBeta, Param::HeadCWeights, Param::HeadCBias],
        ParamGroup::HeadR => [Param::HeadRBnGamma, Param::HeadRBnBeta, Param::HeadRWeights, Param::HeadRBias],
        ParamGroup::HeadG => [Param::HeadGBnGamma, Param::HeadGBnBeta, Param::HeadGWeights, Param::HeadGBias],
        ParamGroup::Trunk => unreachable!("trunk is not a head"),
    }
}

pub(crate) fn concat_columns(parts: &[Tensor]) -> Result<Tensor> {
    let (b, _) = parts[0].dims2()?;
    let mut rows = vec![Vec::new(); b];
    for p in parts {
        let (pb, _) = p.dims2()?;
        if pb != b {
            return Err(Error::shape("concatenated parts differ in batch size"));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.extend_from_slice(p.row(i));
        }
    }
    Tensor::from_rows(&rows)
}

fn slice_columns(x: &Tensor, start: usize, width: usize) -> Result<Tensor> {
    let (b, _) = x.dims2()?;
    let rows: Vec<Vec<f64>> = (0..b).map(|i| x.row(i)[start..start + width].to_vec()).collect();
    Tensor::from_rows(&rows)
}
