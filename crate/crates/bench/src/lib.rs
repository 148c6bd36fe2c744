//! Shared inputs for the benchmarks.

use chartmoe_core::moe::{ExpertMLP, GateNet, MoEConnector};
use chartmoe_core::numkit::Matrix;
use chartmoe_core::seed::rng_for;
use chartmoe_core::stack::StackDims;

/// Default-sized four-expert connector with a random gate, plus `items`
/// images' worth of tokens.
pub fn moe_and_tokens(items: usize, top_k: usize) -> (MoEConnector, Matrix) {
    let d = StackDims::default();
    let mut rng = rng_for(0, "bench");
    let experts = (0..4)
        .map(|_| ExpertMLP::random(d.d_in, d.d_hidden, d.d_out, &mut rng))
        .collect();
    let gate = GateNet {
        w: Matrix::random_normal(d.d_in, 4, 0.5, &mut rng),
        b: Matrix::zeros(1, 4),
    };
    let labels = ["vanilla", "table", "json", "code"]
        .map(String::from)
        .to_vec();
    let c = MoEConnector::new(experts, gate, top_k, true, labels).expect("valid connector");
    let v = Matrix::random_normal(items * d.grid * d.grid, d.d_in, 1.0, &mut rng);
    (c, v)
}

pub fn square(n: usize, seed: u64) -> Matrix {
    Matrix::random_normal(n, n, 1.0, &mut rng_for(seed, "bench-square"))
}
