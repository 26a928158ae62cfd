//! Losses, RMSprop, the joint and iterative training regimes, and the
//! cross-validation driver.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataset::{class_weights, example_from_tokens, lex_records, ClassWeights, FoldPlan, LabeledExample, SubmissionRecord};
use crate::error::{Error, Result};
use crate::model::{GraderNet, ModelConfig, Objective, Param, Prediction, RemarkHead};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::tokenizer::{build_vocab, encode, EncodedStatement, Vocabulary};

pub const LEARNING_RATE: f64 = 0.001;
pub const RHO: f64 = 0.9;
pub const EPSILON: f64 = 1e-8;
/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-7;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Mean binary cross entropy over every element, optionally weighted
/// elementwise. The gradient is taken at the clipped prediction.
pub fn bce_loss(pred: &Tensor, target: &Tensor, weights: Option<&Tensor>) -> Result<(f64, Tensor)> {
    pred.same_shape(target, "bce target")?;
    if let Some(w) = weights {
        pred.same_shape(w, "bce weights")?;
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let w = weights.map_or(1.0, |w| w.data()[i]);
        let p = clip(p);
        loss -= w * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        grad.data_mut()[i] = w * (p - t) / (p * (1.0 - p)) / n;
    }
    Ok((loss / n, grad))
}

/// Mean categorical cross entropy over rows, optionally weighted per row.
pub fn cce_loss(probs: &Tensor, one_hot: &Tensor, row_weights: Option<&[f64]>) -> Result<(f64, Tensor)> {
    probs.same_shape(one_hot, "cce target")?;
    let (b, _) = probs.dims2()?;
    if let Some(w) = row_weights {
        if w.len() != b {
            return Err(Error::shape(format!("{} row weights for {b} rows", w.len())));
        }
    }
    for i in 0..b {
        let s: f64 = probs.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("probability row {i} sums to {s}, not 1")));
        }
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(probs.shape());
    for i in 0..b {
        let w = row_weights.map_or(1.0, |w| w[i]);
        let g = grad.row_mut(i);
        for (j, (&p, &t)) in probs.row(i).iter().zip(one_hot.row(i)).enumerate() {
            let p = clip(p);
            loss -= w * t * p.ln();
            g[j] = -w * t / p / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Mean squared error over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape(target, "mse target")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        loss += (p - t) * (p - t);
        grad.data_mut()[i] = 2.0 * (p - t) / n;
    }
    Ok((loss / n, grad))
}

/// RMSprop accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub accumulators: Vec<Tensor>,
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl OptimizerState {
    pub fn new(shapes: &[&[usize]]) -> Self {
        Self {
            accumulators: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            rho: RHO,
            epsilon: EPSILON,
            learning_rate: LEARNING_RATE,
        }
    }

    /// One accumulator for every trainable tensor of `net`, indexed by
    /// [`Param::index`].
    pub fn for_net(net: &GraderNet) -> Self {
        let shapes: Vec<&[usize]> = Param::ALL.iter().map(|&p| net.param(p).shape()).collect();
        Self::new(&shapes)
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// `acc = rho·acc + (1 - rho)·g²; θ -= lr·g / (√acc + ε)`, elementwise.
pub fn rmsprop_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accumulators.len() {
        return Err(Error::shape(format!(
            "{} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.accumulators.len()
        )));
    }
    for ((p, g), acc) in params.iter().zip(grads).zip(&state.accumulators) {
        p.same_shape(g, "gradient")?;
        p.same_shape(acc, "accumulator")?;
    }
    let (rho, eps, lr) = (state.rho, state.epsilon, state.learning_rate);
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(state.accumulators.iter_mut()) {
        for ((theta, &g), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *a = rho * *a + (1.0 - rho) * g * g;
            *theta -= lr * g / (a.sqrt() + eps);
        }
    }
    Ok(())
}

/// Applies one RMSprop step to every parameter in `objective`'s groups.
/// `state` must come from [`OptimizerState::for_net`].
pub fn step_net(net: &mut GraderNet, grads: &crate::model::Gradients, objective: Objective, state: &mut OptimizerState) -> Result<()> {
    let groups = objective.groups();
    let (rho, eps, lr) = (state.rho, state.epsilon, state.learning_rate);
    for &p in Param::ALL.iter().filter(|p| groups.contains(&p.group())) {
        let g = grads.get(p);
        let acc = &mut state.accumulators[p.index()];
        let theta = net.param_mut(p);
        theta.same_shape(g, p.name())?;
        theta.same_shape(acc, p.name())?;
        for ((t, &g), a) in theta.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *a = rho * *a + (1.0 - rho) * g * g;
            *t -= lr * g / (a.sqrt() + eps);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Joint,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weighting: bool,
    pub shuffle_each_epoch: bool,
    pub learning_rate: f64,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, epochs: usize, seed: u64) -> Self {
        Self {
            mode,
            epochs,
            batch_size: 32,
            seed,
            class_weighting: false,
            shuffle_each_epoch: true,
            learning_rate: LEARNING_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Parameter(format!("batch_size {} must be at least 2", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// `joint`, `C`, `R` or `G`.
    pub objective: String,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub final_checksum: u32,
}

impl TrainHistory {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
            .collect()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Last recorded loss for each objective label, in first-seen order.
    pub fn final_losses(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for r in &self.epochs {
            match out.iter_mut().find(|(o, _)| *o == r.objective) {
                Some(slot) => slot.1 = r.loss,
                None => out.push((r.objective.clone(), r.loss)),
            }
        }
        out
    }
}

/// Splits a permutation into minibatches. A trailing batch of one is
/// merged into the previous batch, since training-mode batch norm needs
/// at least two rows.
pub fn minibatches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Iterative schedule: epoch `e` (0-based) trains C, R, G round-robin.
pub fn iterative_objective(epoch: usize) -> Objective {
    [Objective::Correctness, Objective::Remark, Objective::Grade][epoch % 3]
}

struct Targets<'a> {
    examples: &'a [LabeledExample],
    weights: Option<ClassWeights>,
}

impl Targets<'_> {
    fn correctness_weight(&self, e: &LabeledExample) -> f64 {
        self.weights
            .as_ref()
            .map_or(1.0, |w| w.correctness[usize::from(e.y_correct >= 0.5)])
    }

    fn remark_weight(&self, e: &LabeledExample) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.remark[e.remark().index()])
    }

    /// Loss and output gradient for `objective` on the rows in `idx`.
    fn loss(&self, objective: Objective, idx: &[usize], out: &Tensor) -> Result<(f64, Tensor)> {
        let rows = idx.iter().map(|&i| &self.examples[i]);
        let weighted = self.weights.is_some();
        match objective {
            Objective::Joint => {
                let t: Vec<Vec<f64>> = rows
                    .clone()
                    .map(|e| {
                        let mut r = vec![e.y_correct];
                        r.extend_from_slice(&e.y_remark);
                        r.push(e.y_grade);
                        r
                    })
                    .collect();
                let w = if weighted {
                    let w: Vec<Vec<f64>> = rows
                        .map(|e| {
                            let rw = self.remark_weight(e);
                            vec![self.correctness_weight(e), rw, rw, rw, rw, 1.0]
                        })
                        .collect();
                    Some(Tensor::from_rows(&w)?)
                } else {
                    None
                };
                bce_loss(out, &Tensor::from_rows(&t)?, w.as_ref())
            }
            Objective::Correctness => {
                let t: Vec<Vec<f64>> = rows.clone().map(|e| vec![e.y_correct]).collect();
                let w = if weighted {
                    Some(Tensor::from_rows(&rows.map(|e| vec![self.correctness_weight(e)]).collect::<Vec<_>>())?)
                } else {
                    None
                };
                bce_loss(out, &Tensor::from_rows(&t)?, w.as_ref())
            }
            Objective::Remark => {
                let t: Vec<Vec<f64>> = rows.clone().map(|e| e.y_remark.to_vec()).collect();
                let w: Option<Vec<f64>> = weighted.then(|| rows.map(|e| self.remark_weight(e)).collect());
                cce_loss(out, &Tensor::from_rows(&t)?, w.as_deref())
            }
            Objective::Grade => {
                let t: Vec<Vec<f64>> = rows.map(|e| vec![e.y_grade]).collect();
                mse_loss(out, &Tensor::from_rows(&t)?)
            }
        }
    }
}

/// Called after every epoch with the record just appended and the
/// network; returning `false` stops training early.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &GraderNet) -> bool + 'a;

/// Trains `net` on `examples` according to `config.mode`.
pub fn train(net: &mut GraderNet, examples: &[LabeledExample], config: &TrainConfig, rng: &mut SeededRng) -> Result<TrainHistory> {
    train_with_hook(net, examples, config, rng, &mut |_, _| true)
}

pub fn train_joint(net: &mut GraderNet, examples: &[LabeledExample], config: &TrainConfig, rng: &mut SeededRng) -> Result<TrainHistory> {
    let config = TrainConfig {
        mode: TrainMode::Joint,
        ..config.clone()
    };
    train(net, examples, &config, rng)
}

pub fn train_iterative(net: &mut GraderNet, examples: &[LabeledExample], config: &TrainConfig, rng: &mut SeededRng) -> Result<TrainHistory> {
    let config = TrainConfig {
        mode: TrainMode::Iterative,
        ..config.clone()
    };
    train(net, examples, &config, rng)
}

/// [`train`] with a per-epoch callback.
///
/// Joint mode minimizes one BCE over `[C | R | G]` with every unit a
/// sigmoid, and leaves head R in sigmoid mode. Iterative mode trains C
/// (BCE), R (CCE over a softmax) and G (MSE) one epoch at a time, the trunk
/// moving in every phase, and leaves head R in softmax mode. Each objective
/// keeps its own optimizer state.
pub fn train_with_hook(
    net: &mut GraderNet,
    examples: &[LabeledExample],
    config: &TrainConfig,
    rng: &mut SeededRng,
    hook: &mut EpochHook<'_>,
) -> Result<TrainHistory> {
    config.validate()?;
    if config.epochs > 0 && examples.len() < 2 {
        return Err(Error::BatchSize(examples.len()));
    }
    net.set_remark_head(match config.mode {
        TrainMode::Joint => RemarkHead::Sigmoid,
        TrainMode::Iterative => RemarkHead::Softmax,
    });
    if config.epochs == 0 {
        return Ok(TrainHistory {
            epochs: Vec::new(),
            final_checksum: checkpoint::checksum(net),
        });
    }
    let targets = Targets {
        examples,
        weights: if config.class_weighting {
            Some(class_weights(examples)?)
        } else {
            None
        },
    };
    let statements: Vec<&EncodedStatement> = examples.iter().map(|e| &e.x).collect();
    let fresh = OptimizerState::for_net(net).with_learning_rate(config.learning_rate);
    let mut states: Vec<(Objective, OptimizerState)> = Vec::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let objective = match config.mode {
            TrainMode::Joint => Objective::Joint,
            TrainMode::Iterative => iterative_objective(epoch),
        };
        if !states.iter().any(|(o, _)| *o == objective) {
            states.push((objective, fresh.clone()));
        }
        if config.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for (b, idx) in minibatches(&order, config.batch_size).iter().enumerate() {
            let batch: Vec<EncodedStatement> = idx.iter().map(|&i| statements[i].clone()).collect();
            let (out, cache) = net.forward_train(&batch, objective, rng)?;
            let (loss, d_out) = targets.loss(objective, idx, &out)?;
            let grads = net.backward(cache, &d_out)?;
            if !loss.is_finite() || grads.tensors.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b + 1,
                    max_abs_grad: grads
                        .tensors
                        .iter()
                        .flat_map(|t| t.data().iter())
                        .map(|g| g.abs())
                        .fold(0.0, |m, g| if g.is_nan() || m.is_nan() { f64::NAN } else { m.max(g) }),
                });
            }
            let state = &mut states.iter_mut().find(|(o, _)| *o == objective).unwrap().1;
            step_net(net, &grads, objective, state)?;
            total += loss * idx.len() as f64;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            objective: objective.label().to_string(),
            loss: total / examples.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        history.epochs.push(record.clone());
        if !hook(&record, net) {
            break;
        }
    }
    history.final_checksum = checkpoint::checksum(net);
    Ok(history)
}

// ---------------------------------------------------------------------------
// End-to-end fitting and cross-validation

/// Vocabulary and labeled examples for a set of records.
pub fn prepare(records: &[SubmissionRecord], min_count: usize) -> Result<(Vocabulary, Vec<LabeledExample>)> {
    let tokens = lex_records(records)?;
    let vocab = build_vocab(&tokens, min_count)?;
    let examples = records
        .iter()
        .zip(&tokens)
        .map(|(r, t)| example_from_tokens(r, t, &vocab))
        .collect();
    Ok((vocab, examples))
}

/// A trained network together with its vocabulary.
pub struct Fitted {
    pub net: GraderNet,
    pub vocab: Vocabulary,
    pub history: TrainHistory,
}

/// Builds the vocabulary from `records`, builds a fresh network from
/// `template` (vocabulary size filled in) seeded by `rng`, and trains it.
pub fn fit(records: &[SubmissionRecord], template: &ModelConfig, config: &TrainConfig, rng: &mut SeededRng) -> Result<Fitted> {
    fit_with_hook(records, template, config, rng, &mut |_, _| true)
}

pub fn fit_with_hook(
    records: &[SubmissionRecord],
    template: &ModelConfig,
    config: &TrainConfig,
    rng: &mut SeededRng,
    hook: &mut EpochHook<'_>,
) -> Result<Fitted> {
    let (vocab, examples) = prepare(records, 1)?;
    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        seed: rng.seed(),
        ..template.clone()
    };
    let mut net = GraderNet::build(model_config, rng)?;
    let history = train_with_hook(&mut net, &examples, config, rng, hook)?;
    Ok(Fitted { net, vocab, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub history: TrainHistory,
    /// `(example index, out-of-fold prediction)` for the fold's validation set.
    pub predictions: Vec<(usize, Prediction)>,
    pub vocab: Vocabulary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    /// Indexed by example: `(fold, prediction)`.
    pub out_of_fold: Vec<(usize, Prediction)>,
}

/// Seed stream for fold `fold` under master seed `seed`.
pub fn fold_rng(seed: u64, fold: usize) -> SeededRng {
    SeededRng::with_stream(seed, fold as u64 + 1)
}

/// Trains fold `fold` of `plan` from scratch: vocabulary from its training
/// split, network seeded from the fold index, predictions on its
/// validation split. Depends on nothing but its arguments.
pub fn run_fold(
    records: &[SubmissionRecord],
    plan: &FoldPlan,
    fold: usize,
    template: &ModelConfig,
    config: &TrainConfig,
) -> Result<FoldResult> {
    let fold_split = plan.folds.get(fold).ok_or(Error::Index {
        index: fold,
        size: plan.folds.len(),
    })?;
    let attach = |e: Error| Error::Fold {
        fold,
        source: Box::new(e),
    };
    let train_records: Vec<SubmissionRecord> = fold_split.train.iter().map(|&i| records[i].clone()).collect();
    let mut rng = fold_rng(config.seed, fold);
    let fitted = fit(&train_records, template, config, &mut rng).map_err(attach)?;
    let val_tokens = lex_records(&fold_split.val.iter().map(|&i| records[i].clone()).collect::<Vec<_>>()).map_err(attach)?;
    let statements: Vec<EncodedStatement> = val_tokens.iter().map(|t| encode(t, &fitted.vocab)).collect();
    let preds = fitted.net.predict_batch(&statements).map_err(attach)?;
    Ok(FoldResult {
        fold,
        history: fitted.history,
        predictions: fold_split.val.iter().copied().zip(preds).collect(),
        vocab: fitted.vocab,
    })
}

/// Runs every fold of `plan`, in parallel on `jobs` threads (0 picks the
/// default). Results do not depend on `jobs` or on scheduling.
pub fn cross_validate(
    records: &[SubmissionRecord],
    plan: &FoldPlan,
    template: &ModelConfig,
    config: &TrainConfig,
    jobs: usize,
) -> Result<CrossValidation> {
    if plan.n != records.len() {
        return Err(Error::Input(format!(
            "fold plan covers {} examples, dataset has {}",
            plan.n,
            records.len()
        )));
    }
    if let Some(&bad) = plan.folds.iter().flat_map(|f| f.train.iter().chain(&f.val)).find(|&&i| i >= records.len()) {
        return Err(Error::Index {
            index: bad,
            size: records.len(),
        });
    }
    lex_records(records)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let folds: Vec<FoldResult> = pool.install(|| {
        (0..plan.len())
            .into_par_iter()
            .map(|f| run_fold(records, plan, f, template, config))
            .collect::<Result<Vec<_>>>()
    })?;
    assemble(folds, records.len())
}

/// Collects fold results into per-example out-of-fold predictions,
/// checking that each example is predicted exactly once.
pub fn assemble(mut folds: Vec<FoldResult>, n: usize) -> Result<CrossValidation> {
    folds.sort_by_key(|f| f.fold);
    let mut slots: Vec<Option<(usize, Prediction)>> = vec![None; n];
    for f in &folds {
        for (i, p) in &f.predictions {
            if slots[*i].replace((f.fold, p.clone())).is_some() {
                return Err(Error::Input(format!("example {i} predicted by more than one fold")));
            }
        }
    }
    let out_of_fold = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Input(format!("example {i} has no out-of-fold prediction"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossValidation { folds, out_of_fold })
}
