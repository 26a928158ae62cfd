//! Acceptance suite. Runs every criterion in sequence (so the timing bounds
//! are not skewed by tests running alongside) and prints one PASS/FAIL line
//! per criterion. Exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use sqlgrade::dataset::{generate_synthetic, kfold_split, loo_split, FoldPlan};
use sqlgrade::layers::{
    dropout_forward, global_avg_pool, global_avg_pool_backward, dropout_backward, Activation, Attention,
    BatchNormParams, ConvEncoderParams, DenseParams, EmbeddingParams,
};
use sqlgrade::metrics::{self, balanced_accuracy, confusion, precision_recall, roc_auc, EvalRow};
use sqlgrade::model::{Objective, Param, ParamGroup};
use sqlgrade::tensor::softmax_rows;
use sqlgrade::tokenizer::TokenId;
use sqlgrade::training::{
    self, bce_loss, cce_loss, mse_loss, rmsprop_step, OptimizerState, TrainConfig, TrainMode,
};
use sqlgrade::{checkpoint, cli, EncodedStatement, GraderNet, ModelConfig, SeededRng, Tensor, Vocabulary};

/// Frozen parameter count for the default configuration at vocabulary 1000.
const PARAM_COUNT_VOCAB_1000: usize = 103_844;

/// First epoch at which joint training on the seed-7 synthetic corpus meets
/// both overfit thresholds. Frozen as a regression bound.
const OVERFIT_PASS_EPOCH: usize = 276;

/// Epoch from which the overfit run is evaluated every epoch.
const OVERFIT_EVAL_FROM: usize = 200;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random(shape: &[usize], rng: &mut SeededRng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(lo, hi)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn numeric_grad(x: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

/// Largest relative error, ignoring pairs where both sides are negligible.
fn max_rel(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .filter(|(a, n)| a.abs() > 1e-9 || n.abs() > 1e-9)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn statements(n: usize, vocab: usize, len: usize, rng: &mut SeededRng) -> Vec<EncodedStatement> {
    (0..n)
        .map(|_| {
            let content = 1 + rng.below(len);
            let ids = (0..len)
                .map(|i| if i < content { TokenId(1 + rng.below(vocab - 1) as u32) } else { TokenId::PAD })
                .collect();
            EncodedStatement::from_ids(ids).unwrap()
        })
        .collect()
}

fn default_net(vocab: usize, seed: u64) -> GraderNet {
    GraderNet::build(ModelConfig::new(vocab, seed), &mut SeededRng::new(seed)).unwrap()
}

fn layer_gradients(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut track = |name: &str, a: &Tensor, n: &Tensor| {
        let r = max_rel(a, n);
        assert!(r < 1e-4, "seed {seed} {name}: relative error {r}");
        worst = worst.max(r);
    };

    // embedding
    let emb = EmbeddingParams {
        table: random(&[7, 3], &mut rng, -1.0, 1.0),
    };
    let ids: Vec<TokenId> = (0..5).map(|_| TokenId(rng.below(7) as u32)).collect();
    let up = random(&[5, 3], &mut rng, -1.0, 1.0);
    let (_, cache) = emb.forward(&ids).unwrap();
    let g = emb.backward(cache, &up).unwrap();
    let n = numeric_grad(&emb.table, h, |t| {
        dot(&EmbeddingParams { table: t.clone() }.forward(&ids).unwrap().0, &up)
    });
    track("embedding", &g, &n);

    // convolution
    let x = random(&[6, 3], &mut rng, -1.0, 1.0);
    let conv = ConvEncoderParams::new(random(&[3, 3, 4], &mut rng, -1.0, 1.0), random(&[4], &mut rng, -0.3, 0.3)).unwrap();
    let up = random(&[6, 4], &mut rng, -1.0, 1.0);
    let (_, cache) = conv.forward(&x).unwrap();
    let (dx, g) = conv.backward(cache, &up).unwrap();
    track("conv input", &dx, &numeric_grad(&x, h, |x| dot(&conv.forward(x).unwrap().0, &up)));
    let nk = numeric_grad(&conv.kernels, h, |k| {
        dot(&ConvEncoderParams::new(k.clone(), conv.bias.clone()).unwrap().forward(&x).unwrap().0, &up)
    });
    track("conv kernels", &g.kernels, &nk);
    let nb = numeric_grad(&conv.bias, h, |b| {
        dot(&ConvEncoderParams::new(conv.kernels.clone(), b.clone()).unwrap().forward(&x).unwrap().0, &up)
    });
    track("conv bias", &g.bias, &nb);

    // attention, unscaled and scaled
    let q = random(&[5, 4], &mut rng, -1.0, 1.0);
    let v = random(&[5, 4], &mut rng, -1.0, 1.0);
    let up = random(&[5, 4], &mut rng, -1.0, 1.0);
    for att in [Attention { scaled: false }, Attention { scaled: true }] {
        let (_, cache) = att.forward(&q, &v).unwrap();
        let (dq, dv) = att.backward(cache, &up).unwrap();
        track("attention q", &dq, &numeric_grad(&q, h, |q| dot(&att.forward(q, &v).unwrap().0, &up)));
        track("attention v", &dv, &numeric_grad(&v, h, |v| dot(&att.forward(&q, v).unwrap().0, &up)));
    }

    // global average pooling
    let x = random(&[6, 3], &mut rng, -1.0, 1.0);
    let up = random(&[3], &mut rng, -1.0, 1.0);
    let (_, cache) = global_avg_pool(&x).unwrap();
    let dx = global_avg_pool_backward(cache, &up).unwrap();
    track("pooling", &dx, &numeric_grad(&x, h, |x| dot(&global_avg_pool(x).unwrap().0, &up)));

    // dropout with a fixed mask
    let x = random(&[4, 5], &mut rng, -1.0, 1.0);
    let up = random(&[4, 5], &mut rng, -1.0, 1.0);
    let mask_seed = rng.next_u64();
    let drop = |x: &Tensor| dropout_forward(x, 0.25, &mut SeededRng::new(mask_seed), true).unwrap();
    let dx = dropout_backward(drop(&x).1, &up).unwrap();
    track("dropout", &dx, &numeric_grad(&x, h, |x| dot(&drop(x).0, &up)));

    // batch normalization, training mode
    let x = random(&[5, 3], &mut rng, -2.0, 2.0);
    let mut bn = BatchNormParams::new(3);
    bn.gamma = random(&[3], &mut rng, 0.5, 1.5);
    bn.beta = random(&[3], &mut rng, -0.5, 0.5);
    let up = random(&[5, 3], &mut rng, -1.0, 1.0);
    let (_, cache) = bn.clone().forward(&x, true).unwrap();
    let (dx, g) = bn.backward(cache, &up).unwrap();
    let bn_out = |p: &BatchNormParams, x: &Tensor| dot(&p.clone().forward(x, true).unwrap().0, &up);
    track("batchnorm input", &dx, &numeric_grad(&x, h, |x| bn_out(&bn, x)));
    let ng = numeric_grad(&bn.gamma, h, |t| bn_out(&BatchNormParams { gamma: t.clone(), ..bn.clone() }, &x));
    track("batchnorm gamma", &g.gamma, &ng);
    let nb = numeric_grad(&bn.beta, h, |t| bn_out(&BatchNormParams { beta: t.clone(), ..bn.clone() }, &x));
    track("batchnorm beta", &g.beta, &nb);

    // dense with every activation
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Softmax, Activation::Linear] {
        let dense = DenseParams {
            weights: random(&[4, 3], &mut rng, -1.0, 1.0),
            bias: random(&[3], &mut rng, -0.5, 0.5),
            activation: act,
        };
        let x = random(&[5, 4], &mut rng, -1.0, 1.0);
        let up = random(&[5, 3], &mut rng, -1.0, 1.0);
        let (_, cache) = dense.forward(&x).unwrap();
        let (dx, g) = dense.backward(cache, &up).unwrap();
        let out = |d: &DenseParams, x: &Tensor| dot(&d.forward(x).unwrap().0, &up);
        track("dense input", &dx, &numeric_grad(&x, h, |x| out(&dense, x)));
        let nw = numeric_grad(&dense.weights, h, |w| out(&DenseParams { weights: w.clone(), ..dense.clone() }, &x));
        track("dense weights", &g.weights, &nw);
        let nb = numeric_grad(&dense.bias, h, |b| out(&DenseParams { bias: b.clone(), ..dense.clone() }, &x));
        track("dense bias", &g.bias, &nb);
    }
    worst
}

fn loss_gradients(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut track = |name: &str, a: &Tensor, n: &Tensor| {
        let r = max_rel(a, n);
        assert!(r < 1e-6, "seed {seed} {name}: relative error {r}");
        worst = worst.max(r);
    };
    let pred = random(&[4, 6], &mut rng, 0.05, 0.95);
    let target = Tensor::new(vec![4, 6], (0..24).map(|_| rng.below(2) as f64).collect()).unwrap();
    let weights = random(&[4, 6], &mut rng, 0.2, 3.0);
    for w in [None, Some(&weights)] {
        let (_, g) = bce_loss(&pred, &target, w).unwrap();
        track("bce", &g, &numeric_grad(&pred, h, |p| bce_loss(p, &target, w).unwrap().0));
    }

    let pred = random(&[5, 1], &mut rng, -1.0, 2.0);
    let target = random(&[5, 1], &mut rng, 0.0, 1.0);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    track("mse", &g, &numeric_grad(&pred, h, |p| mse_loss(p, &target).unwrap().0));

    // categorical cross entropy through the softmax it is paired with
    let logits = random(&[4, 4], &mut rng, -2.0, 2.0);
    let mut one_hot = Tensor::zeros(&[4, 4]);
    for r in 0..4 {
        one_hot.row_mut(r)[rng.below(4)] = 1.0;
    }
    let row_w: Vec<f64> = (0..4).map(|_| rng.uniform_range(0.5, 2.0)).collect();
    for w in [None, Some(&row_w[..])] {
        let probs = softmax_rows(&logits).unwrap();
        let (_, dprobs) = cce_loss(&probs, &one_hot, w).unwrap();
        let g = Activation::Softmax.backward(&probs, &dprobs).unwrap();
        let n = numeric_grad(&logits, h, |z| cce_loss(&softmax_rows(z).unwrap(), &one_hot, w).unwrap().0);
        track("cce", &g, &n);
    }
    worst
}

fn network_gradients(seed: u64) -> f64 {
    let mut cfg = ModelConfig::new(12, seed);
    cfg.seq_len = 6;
    cfg.embed_dim = 4;
    cfg.conv_filters = 3;
    let mut net = GraderNet::build(cfg, &mut SeededRng::new(seed)).unwrap();
    let mut rng = SeededRng::new(seed + 100);
    let batch = statements(4, 12, 6, &mut rng);
    let mut worst: f64 = 0.0;
    for objective in [Objective::Joint, Objective::Correctness, Objective::Remark, Objective::Grade] {
        let width = match objective {
            Objective::Joint => 6,
            Objective::Remark => 4,
            _ => 1,
        };
        let up = random(&[4, width], &mut rng, -1.0, 1.0);
        let loss = |net: &mut GraderNet| dot(&net.forward_train(&batch, objective, &mut SeededRng::new(seed)).unwrap().0, &up);
        let (_, cache) = net.forward_train(&batch, objective, &mut SeededRng::new(seed)).unwrap();
        let grads = net.backward(cache, &up).unwrap();
        let h = 1e-6;
        for p in Param::ALL {
            let mut numeric = Tensor::zeros(net.param(p).shape());
            for i in 0..numeric.len() {
                let orig = net.param(p).data()[i];
                net.param_mut(p).data_mut()[i] = orig + h;
                let plus = loss(&mut net);
                net.param_mut(p).data_mut()[i] = orig - h;
                let minus = loss(&mut net);
                net.param_mut(p).data_mut()[i] = orig;
                numeric.data_mut()[i] = (plus - minus) / (2.0 * h);
            }
            let r = max_rel(grads.get(p), &numeric);
            assert!(r < 1e-4, "seed {seed} {objective:?} {}: relative error {r}", p.name());
            worst = worst.max(r);
        }
    }
    worst
}

fn c1_gradient_integrity() -> Outcome {
    let (mut layers, mut losses, mut network) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..10 {
        layers = layers.max(layer_gradients(seed));
        losses = losses.max(loss_gradients(seed));
        network = network.max(network_gradients(seed));
    }
    Ok(format!(
        "10 seeds; max rel error layers {layers:.1e}, network {network:.1e}, losses {losses:.1e}"
    ))
}

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ordered
/// correctly, ties counted half.
fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn c2_auc_oracle() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 1000 {
        let n = 2 + rng.below(49);
        let labels: Vec<bool> = (0..n).map(|_| rng.below(2) == 1).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        // coarse grid on half the instances to force ties
        let levels = if instances % 2 == 0 { 5 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        let err = (auc - concordance(&scores, &labels)).abs();
        check(err <= 1e-12, format!("instance {instances}: AUC {auc} differs by {err}"))?;
        worst = worst.max(err);
        instances += 1;
    }
    Ok(format!("1000 instances, max |AUC - concordance| = {worst:.1e}"))
}

fn c3_shape_contract() -> Outcome {
    let mut net = default_net(1000, 3);
    check(
        net.param_count() == PARAM_COUNT_VOCAB_1000,
        format!("parameter count {} != {PARAM_COUNT_VOCAB_1000}", net.param_count()),
    )?;
    let batch = statements(8, 1000, 172, &mut SeededRng::new(33));
    for training in [false, true] {
        let z = net.forward_trunk(&batch, training, &mut SeededRng::new(1)).unwrap();
        check(z.shape() == [8, 2], format!("trunk shape {:?}", z.shape()))?;
        check(z.data().iter().all(|v| v.abs() < 1.0), "trunk output outside (-1, 1)")?;
        let y = net.forward_joint(&batch, training, &mut SeededRng::new(1)).unwrap();
        check(y.shape() == [8, 6], format!("joint shape {:?}", y.shape()))?;
        check(y.data().iter().all(|&v| v > 0.0 && v < 1.0), "joint output outside (0, 1)")?;
    }
    let mut worst: f64 = 0.0;
    for p in net.predict_batch(&batch).unwrap() {
        worst = worst.max((p.remark_probs.iter().sum::<f64>() - 1.0).abs());
    }
    check(worst <= 1e-9, format!("remark probabilities sum off by {worst}"))?;
    Ok(format!("[B,2] and [B,6] in range, |sum - 1| <= {worst:.1e}, {PARAM_COUNT_VOCAB_1000} parameters"))
}

/// Columns of the joint output owned by each head.
fn head_columns(group: ParamGroup) -> std::ops::Range<usize> {
    match group {
        ParamGroup::HeadC => 0..1,
        ParamGroup::HeadR => 1..5,
        ParamGroup::HeadG => 5..6,
        ParamGroup::Trunk => 0..6,
    }
}

fn c4_parameter_sharing() -> Outcome {
    let net = default_net(60, 4);
    let batch = statements(6, 60, 172, &mut SeededRng::new(44));
    let base = net.joint_infer(&batch).unwrap();
    let moved = |out: &Tensor, cols: std::ops::Range<usize>| -> f64 {
        (0..6)
            .flat_map(|r| cols.clone().map(move |c| (r, c)))
            .map(|(r, c)| (out.get2(r, c) - base.get2(r, c)).abs())
            .fold(0.0, f64::max)
    };
    let heads = [ParamGroup::HeadC, ParamGroup::HeadR, ParamGroup::HeadG];
    for p in Param::ALL {
        let mut perturbed = net.clone();
        let mut rng = SeededRng::new(p.index() as u64);
        for v in perturbed.param_mut(p).data_mut() {
            *v += rng.uniform_range(0.05, 0.1);
        }
        let out = perturbed.joint_infer(&batch).unwrap();
        for head in heads {
            let delta = moved(&out, head_columns(head));
            let expect_change = p.group() == ParamGroup::Trunk || p.group() == head;
            if expect_change {
                check(delta > 1e-12, format!("{} did not change head {head:?}", p.name()))?;
            } else {
                check(delta <= 1e-12, format!("{} leaked into head {head:?} ({delta})", p.name()))?;
            }
        }
    }
    Ok(format!("{} parameter tensors perturbed", Param::ALL.len()))
}

fn c5_overfit() -> Outcome {
    let records = generate_synthetic(200, 7).map_err(|e| e.to_string())?;
    let (_, examples) = training::prepare(&records, 1).map_err(|e| e.to_string())?;
    let xs: Vec<EncodedStatement> = examples.iter().map(|e| e.x.clone()).collect();
    let mut config = TrainConfig::new(TrainMode::Joint, 300, 7);
    config.class_weighting = true;
    let mut passed: Option<(usize, f64, f64)> = None;
    let mut last = (0.0, 0.0);
    let start = Instant::now();
    training::fit_with_hook(&records, &ModelConfig::new(0, 7), &config, &mut SeededRng::new(7), &mut |rec, net| {
        if rec.epoch < OVERFIT_EVAL_FROM {
            return true;
        }
        let preds = net.predict_batch(&xs).unwrap();
        let rows: Vec<EvalRow> = examples
            .iter()
            .zip(&preds)
            .map(|(e, p)| EvalRow {
                submission_id: e.submission_id.clone(),
                fold: None,
                p_correct: p.p_correct,
                remark_probs: std::array::from_fn(|k| p.remark_probs[k]),
                grade_hat: p.grade_hat,
                is_correct: e.y_correct > 0.5,
                remark: e.remark(),
                grade: e.y_grade,
            })
            .collect();
        let report = metrics::evaluate(&rows).unwrap();
        let auc = report.correctness.roc.curve.map_or(0.0, |c| c.auc);
        let ap = report.remark.macro_ap.unwrap_or(0.0);
        last = (auc, ap);
        if auc >= 0.95 && ap >= 0.90 {
            passed = Some((rec.epoch, auc, ap));
            return false;
        }
        true
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (epoch, auc, ap) = passed.ok_or(format!(
        "thresholds not met in 300 epochs (last AUC {:.4}, macro-AP {:.4})",
        last.0, last.1
    ))?;
    check(
        epoch <= OVERFIT_PASS_EPOCH,
        format!("passed at epoch {epoch}, regression bound is {OVERFIT_PASS_EPOCH}"),
    )?;
    check(elapsed < Duration::from_secs(300), format!("took {:.0} s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "epoch {epoch} (bound {OVERFIT_PASS_EPOCH}): AUC {auc:.4}, macro-AP {ap:.4}, {:.0} s",
        elapsed.as_secs_f64()
    ))
}

fn partition_law(plan: &FoldPlan) -> Result<(), String> {
    let mut seen = vec![0usize; plan.n];
    for f in &plan.folds {
        for &i in &f.val {
            seen[i] += 1;
        }
        let mut all: Vec<usize> = f.train.iter().chain(&f.val).copied().collect();
        all.sort_unstable();
        check(all == (0..plan.n).collect::<Vec<_>>(), "train and validation do not split the index set")?;
    }
    check(seen.iter().all(|&c| c == 1), "validation sets do not partition the index set")
}

fn c6_cross_validation_laws() -> Outcome {
    let mut plans = 0;
    for n in [2, 3, 10, 17, 50, 101] {
        for k in 2..=n.min(12) {
            partition_law(&kfold_split(n, k, n as u64 * 31 + k as u64).map_err(|e| e.to_string())?)?;
            plans += 1;
        }
        let loo = loo_split(n).map_err(|e| e.to_string())?;
        check(loo.len() == n, format!("LOO on {n} gave {} folds", loo.len()))?;
        check(loo.folds.iter().all(|f| f.val.len() == 1), "LOO fold with more than one held-out example")?;
        partition_law(&loo)?;
        plans += 1;
    }

    let records = generate_synthetic(24, 6).map_err(|e| e.to_string())?;
    let mut template = ModelConfig::new(0, 6);
    template.embed_dim = 8;
    template.conv_filters = 6;
    let mut config = TrainConfig::new(TrainMode::Iterative, 3, 6);
    config.batch_size = 8;
    let plan = kfold_split(records.len(), 4, 6).map_err(|e| e.to_string())?;
    let reference = training::cross_validate(&records, &plan, &template, &config, 1).map_err(|e| e.to_string())?;
    check(reference.out_of_fold.len() == records.len(), "out-of-fold predictions missing")?;
    let owner = plan.fold_of();
    for (i, (fold, _)) in reference.out_of_fold.iter().enumerate() {
        check(owner[i] == *fold, format!("example {i} predicted by fold {fold}"))?;
    }
    let bits = |cv: &training::CrossValidation| -> Vec<u64> {
        cv.out_of_fold
            .iter()
            .flat_map(|(_, p)| {
                std::iter::once(p.p_correct)
                    .chain(p.remark_probs.iter().copied())
                    .chain([p.grade_hat])
                    .chain(p.bottleneck.iter().copied())
            })
            .map(f64::to_bits)
            .collect()
    };
    for jobs in [2, 3, 0] {
        let cv = training::cross_validate(&records, &plan, &template, &config, jobs).map_err(|e| e.to_string())?;
        check(bits(&cv) == bits(&reference), format!("predictions differ with jobs={jobs}"))?;
    }
    let permuted: Vec<_> = [2, 0, 3, 1]
        .iter()
        .map(|&f| training::run_fold(&records, &plan, f, &template, &config))
        .collect::<sqlgrade::Result<_>>()
        .map_err(|e| e.to_string())?;
    let cv = training::assemble(permuted, records.len()).map_err(|e| e.to_string())?;
    check(bits(&cv) == bits(&reference), "predictions differ under permuted fold order")?;
    Ok(format!("{plans} fold plans partition exactly; CV bit-identical for jobs 1/2/3/0 and permuted order"))
}

fn c7_closed_forms() -> Outcome {
    let mut preds = vec![1usize; 50];
    preds.extend(vec![0usize; 50]);
    preds.extend(vec![0usize; 100]);
    let mut actual = vec![1usize; 100];
    actual.extend(vec![0usize; 100]);
    let cm = confusion(&preds, &actual, &["neg", "pos"]).map_err(|e| e.to_string())?;
    let ba = balanced_accuracy(&cm).map_err(|e| e.to_string())?;
    let ap = precision_recall(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true])
        .map_err(|e| e.to_string())?
        .average_precision;
    let bce = bce_loss(&Tensor::vector(vec![0.5]), &Tensor::vector(vec![1.0]), None)
        .map_err(|e| e.to_string())?
        .0;
    let mut one_hot = Tensor::zeros(&[1, 4]);
    one_hot.row_mut(0)[2] = 1.0;
    let cce = cce_loss(&Tensor::filled(&[1, 4], 0.25), &one_hot, None).map_err(|e| e.to_string())?.0;
    for (name, got, want) in [
        ("balanced accuracy", ba, 0.75),
        ("average precision", ap, 0.25),
        ("BCE", bce, 2f64.ln()),
        ("CCE", cce, 4f64.ln()),
    ] {
        check((got - want).abs() <= 1e-9, format!("{name}: {got} vs {want}"))?;
    }
    Ok(format!("balanced accuracy {ba}, AP {ap}, BCE {bce:.6}, CCE {cce:.6}"))
}

fn c8_checkpoint_round_trip() -> Outcome {
    let tokens: Vec<String> = (0..80).map(|i| format!("tok{i}")).collect();
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| e.to_string())?;
    let net = default_net(vocab.len(), 8);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join(format!("model.{}", checkpoint::EXTENSION));
    checkpoint::save(&net, &vocab, &path).map_err(|e| e.to_string())?;
    let (loaded, _, loaded_vocab) = checkpoint::load(&path).map_err(|e| e.to_string())?;
    check(loaded_vocab == vocab, "vocabulary changed")?;
    let inputs = statements(100, vocab.len(), 172, &mut SeededRng::new(88));
    for (i, s) in inputs.iter().enumerate() {
        let a = net.predict(s).map_err(|e| e.to_string())?;
        let b = loaded.predict(s).map_err(|e| e.to_string())?;
        let bits = |p: &sqlgrade::Prediction| -> Vec<u64> {
            std::iter::once(p.p_correct)
                .chain(p.remark_probs.iter().copied())
                .chain([p.grade_hat])
                .chain(p.bottleneck.iter().copied())
                .map(f64::to_bits)
                .collect()
        };
        check(bits(&a) == bits(&b), format!("input {i}: predictions differ after reload"))?;
    }
    Ok("100 inputs bitwise identical after save/load".into())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(
        std::iter::once("sqlgrade").chain(args.iter().copied()),
        &mut std::io::empty(),
        &mut out,
        &mut err,
    );
    check(code == 0, format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)))
}

fn c9_end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run_cli(&["gen", "--n", "30", "--seed", "9", "--out", &p("data.csv")])?;
    for run in ["a", "b"] {
        run_cli(&[
            "train", "--data", &p("data.csv"), "--mode", "iterative", "--epochs", "3", "--batch-size", "8",
            "--seed", "9", "--out", &p(&format!("{run}.grader.json")), "--history", &p(&format!("{run}.jsonl")),
        ])?;
        run_cli(&[
            "xval", "--data", &p("data.csv"), "--k", "3", "--epochs", "2", "--batch-size", "8", "--seed", "9",
            "--out", &p(&format!("{run}.metrics.json")), "--preds", &p(&format!("{run}.preds.csv")),
        ])?;
    }
    let read = |name: &str| std::fs::read(dir.path().join(name)).map_err(|e| e.to_string());
    for (a, b) in [
        ("a.grader.json", "b.grader.json"),
        ("a.metrics.json", "b.metrics.json"),
        ("a.preds.csv", "b.preds.csv"),
    ] {
        check(read(a)? == read(b)?, format!("{a} and {b} differ"))?;
    }
    Ok("checkpoint, metrics JSON and predictions byte-identical across reruns".into())
}

fn c10_rmsprop_step() -> Outcome {
    let mut theta = Tensor::vector(vec![1.0]);
    let grad = Tensor::vector(vec![1.0]);
    let mut state = OptimizerState::new(&[&[1]]);
    rmsprop_step(&mut [&mut theta], &[&grad], &mut state).map_err(|e| e.to_string())?;
    let want = 1.0 - 0.001 / (0.1f64.sqrt() + 1e-8);
    let got = theta.data()[0];
    check((got - want).abs() <= 1e-9, format!("{got} vs {want}"))?;
    check((got - 0.9968377).abs() <= 1e-7, format!("{got} vs 0.9968377"))?;
    Ok(format!("theta 1 -> {got:.7}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient integrity", c1_gradient_integrity, Duration::from_secs(60)),
        ("AUC oracle equivalence", c2_auc_oracle, Duration::from_secs(10)),
        ("architecture shape contract", c3_shape_contract, Duration::MAX),
        ("parameter-sharing contract", c4_parameter_sharing, Duration::MAX),
        ("overfit sanity", c5_overfit, Duration::from_secs(300)),
        ("cross-validation laws", c6_cross_validation_laws, Duration::MAX),
        ("metric closed forms", c7_closed_forms, Duration::MAX),
        ("checkpoint round trip", c8_checkpoint_round_trip, Duration::MAX),
        ("end-to-end determinism", c9_end_to_end_determinism, Duration::MAX),
        ("RMSprop single step", c10_rmsprop_step, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(r) => r,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > limit {
                Err(format!("{detail}; took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{:.1} s]", i + 1, elapsed.as_secs_f64()),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why} [{:.1} s]", i + 1, elapsed.as_secs_f64());
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
