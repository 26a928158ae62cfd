// One RMSprop update by hand and by the optimizer.

use sqlgrade::training::{rmsprop_step, OptimizerState, EPSILON, LEARNING_RATE, RHO};
use sqlgrade::Tensor;

pub fn run_example() -> sqlgrade::Result<()> {
    let mut theta = Tensor::vector(vec![1.0, -2.0]);
    let grad = Tensor::vector(vec![1.0, 0.5]);
    let mut state = OptimizerState::new(&[&[2]]);
    for step in 1..=3 {
        rmsprop_step(&mut [&mut theta], &[&grad], &mut state)?;
        println!("step {step}: theta {:?}", theta.data());
    }

    let acc = (1.0 - RHO) * 1.0;
    let by_hand = 1.0 - LEARNING_RATE / (acc.sqrt() + EPSILON);
    println!("first step by hand for theta=1, g=1: {by_hand:.7}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> sqlgrade::Result<()> {
    run_example()
}
