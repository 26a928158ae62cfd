// Compare the network's backward pass against central differences for
// each training objective.

use sqlgrade::model::{Objective, Param};
use sqlgrade::tokenizer::TokenId;
use sqlgrade::{EncodedStatement, GraderNet, ModelConfig, SeededRng, Tensor};

pub fn run_example() -> sqlgrade::Result<()> {
    let mut config = ModelConfig::new(10, 1);
    config.embed_dim = 4;
    config.conv_filters = 3;
    let mut net = GraderNet::build(config, &mut SeededRng::new(1))?;
    let mut rng = SeededRng::new(2);
    let batch: Vec<EncodedStatement> = (0..3)
        .map(|_| {
            let ids = (0..net.config.seq_len)
                .map(|i| if i < 5 { TokenId(1 + rng.below(9) as u32) } else { TokenId::PAD })
                .collect();
            EncodedStatement::from_ids(ids)
        })
        .collect::<sqlgrade::Result<_>>()?;

    for objective in [Objective::Joint, Objective::Correctness, Objective::Remark, Objective::Grade] {
        let (out, cache) = net.forward_train(&batch, objective, &mut SeededRng::new(3))?;
        let upstream = Tensor::new(out.shape().to_vec(), (0..out.len()).map(|_| rng.uniform_range(-1.0, 1.0)).collect())?;
        let grads = net.backward(cache, &upstream)?;
        let loss = |net: &mut GraderNet| -> sqlgrade::Result<f64> {
            let (y, _) = net.forward_train(&batch, objective, &mut SeededRng::new(3))?;
            Ok(y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for p in [Param::ConvQKernels, Param::TrunkBnGamma, Param::BottleneckWeights, Param::HeadRWeights] {
            for i in 0..net.param(p).len().min(6) {
                let orig = net.param(p).data()[i];
                net.param_mut(p).data_mut()[i] = orig + h;
                let plus = loss(&mut net)?;
                net.param_mut(p).data_mut()[i] = orig - h;
                let minus = loss(&mut net)?;
                net.param_mut(p).data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = grads.get(p).data()[i];
                if numeric.abs() > 1e-9 || analytic.abs() > 1e-9 {
                    worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
                }
            }
        }
        println!("{:<5} max relative error {worst:.2e}", objective.label());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
