//! Build a small expression on the tape, backpropagate, and take Adam steps.
use freqgan::tensor::{AdamConfig, AdamState, Graph, Tensor};

fn main() -> freqgan::Result<()> {
    let mut params = vec![Tensor::new(vec![3], vec![2.0, -1.0, 0.5])?];
    let mut opt = AdamState::new(
        AdamConfig {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        },
        &params,
    );
    for step in 0..50 {
        let mut g = Graph::new();
        let x = g.param(params[0].clone());
        let sq = g.square(x);
        let loss = g.sum(sq);
        let value = g.value(loss).item()?;
        let grad = g.backward(loss)?.wrt(x);
        if step % 10 == 0 {
            println!("step {step:2}  loss {value:.5}  grad {:?}", grad.data());
        }
        opt.step(&mut params, &[grad])?;
    }
    println!("x after 50 steps: {:?}", params[0].data());
    Ok(())
}
