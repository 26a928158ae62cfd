// Joint training: one binary cross-entropy over all six outputs.

use sqlgrade::dataset::generate_synthetic;
use sqlgrade::metrics::roc_auc;
use sqlgrade::training::{fit, prepare, TrainConfig, TrainMode};
use sqlgrade::{ModelConfig, SeededRng};

pub fn run_example() -> sqlgrade::Result<()> {
    let records = generate_synthetic(60, 1)?;
    let mut template = ModelConfig::new(0, 1);
    template.embed_dim = 16;
    template.conv_filters = 16;
    let config = TrainConfig::new(TrainMode::Joint, 10, 1);
    let fitted = fit(&records, &template, &config, &mut SeededRng::new(1))?;
    for r in &fitted.history.epochs {
        println!("epoch {:>2}  loss {:.4}", r.epoch, r.loss);
    }

    let (_, examples) = prepare(&records, 1)?;
    let xs: Vec<_> = examples.iter().map(|e| e.x.clone()).collect();
    let preds = fitted.net.predict_batch(&xs)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.p_correct).collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.y_correct > 0.5).collect();
    println!("training-set correctness AUC {:.3}", roc_auc(&scores, &labels)?.auc);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
