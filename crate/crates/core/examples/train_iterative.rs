// Iterative training: heads C, R and G take turns, one epoch each, with
// their own losses; the shared trunk is updated in every phase.

use sqlgrade::dataset::generate_synthetic;
use sqlgrade::training::{fit, TrainConfig, TrainMode};
use sqlgrade::{ModelConfig, SeededRng};

pub fn run_example() -> sqlgrade::Result<()> {
    let records = generate_synthetic(60, 2)?;
    let mut template = ModelConfig::new(0, 2);
    template.embed_dim = 16;
    template.conv_filters = 16;
    let mut config = TrainConfig::new(TrainMode::Iterative, 9, 2);
    config.class_weighting = true;
    let fitted = fit(&records, &template, &config, &mut SeededRng::new(2))?;
    for r in &fitted.history.epochs {
        println!("epoch {}  head {}  loss {:.4}", r.epoch, r.objective, r.loss);
    }
    for (head, loss) in fitted.history.final_losses() {
        println!("final {head}: {loss:.4}");
    }
    print!("{}", fitted.history.to_jsonl().lines().next().unwrap_or_default());
    println!();
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
