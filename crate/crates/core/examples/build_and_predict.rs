// Build the default network and grade one statement with it (untrained).

use sqlgrade::dataset::Remark;
use sqlgrade::tokenizer::{build_vocab, encode, lex};
use sqlgrade::{GraderNet, ModelConfig, SeededRng};

pub fn run_example() -> sqlgrade::Result<()> {
    let tokens = lex("SELECT title FROM course WHERE credits >= 6")?;
    let vocab = build_vocab(std::slice::from_ref(&tokens), 1)?;
    let config = ModelConfig::new(vocab.len(), 42);
    let net = GraderNet::build(config.clone(), &mut SeededRng::new(42))?;
    println!("{} parameters (vocabulary {})", net.param_count(), vocab.len());
    assert_eq!(net.param_count(), config.param_count());

    let p = net.predict(&encode(&tokens, &vocab))?;
    println!("p(correct)  {:.4}", p.p_correct);
    for (remark, prob) in Remark::ALL.iter().zip(&p.remark_probs) {
        println!("p({remark:<17}) {prob:.4}");
    }
    println!("grade       {:.1}%", 100.0 * p.grade_hat);
    println!("bottleneck  {:?}", p.bottleneck);
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
