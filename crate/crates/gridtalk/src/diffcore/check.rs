//! Gradient verification: central finite differences against the tape.
//!
//! Used by unit tests, the acceptance suite, and the `verify` CLI command.

use super::tape::{NodeId, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a scalar-valued graph from the given input buffers and returns the
/// loss node plus the created input nodes (in the same order as the buffers).
pub type GraphBuilder<'a> = &'a dyn Fn(&mut Tape, &[Vec<f64>]) -> (NodeId, Vec<NodeId>);

/// Central finite-difference step.
pub const FD_EPS: f64 = 1e-4;

/// Compare tape gradients against central finite differences for every
/// scalar of every input buffer. Returns the worst relative error.
pub fn finite_difference_check(build: GraphBuilder, inputs: &[Vec<f64>]) -> f64 {
    let mut tape = Tape::new();
    let (loss, nodes) = build(&mut tape, inputs);
    tape.backward(loss);
    let analytic: Vec<Vec<f64>> = nodes.iter().map(|&n| tape.grad(n).to_vec()).collect();

    let eval = |data: &[Vec<f64>]| -> f64 {
        let mut t = Tape::new();
        let (l, _) = build(&mut t, data);
        t.scalar(l)
    };

    let mut worst = 0.0f64;
    for (bi, buf) in inputs.iter().enumerate() {
        for j in 0..buf.len() {
            let mut plus = inputs.to_vec();
            plus[bi][j] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[bi][j] -= FD_EPS;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_EPS);
            let a = analytic[bi][j];
            let err = (a - numeric).abs() / f64::max(1e-6, f64::max(a.abs(), numeric.abs()));
            worst = worst.max(err);
        }
    }
    worst
}

/// One randomized smooth graph: a chain of dense/tanh/softmax/attention
/// blocks collapsed to a scalar, with every intermediate buffer treated as a
/// differentiable input. Returns the worst relative FD error.
pub fn random_graph_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = rng.random_range(2..6usize);
    let hidden = rng.random_range(2..6usize);
    let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.5..1.5)).collect();
    let w1: Vec<f64> = (0..hidden * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b1: Vec<f64> = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w2: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
    let variant = rng.random_range(0..4u32);
    let label = rng.random_range(0..hidden);
    let cell_rows = 3usize;
    let cells_data: Vec<f64> = (0..cell_rows * hidden).map(|_| rng.random_range(-1.0..1.0)).collect();

    let inputs = vec![x, w1, b1, w2];
    let build = move |tape: &mut Tape, data: &[Vec<f64>]| -> (NodeId, Vec<NodeId>) {
        let x = tape.input_vec(data[0].clone());
        let w1 = tape.input((hidden, n_in), data[1].clone());
        let b1 = tape.input_vec(data[2].clone());
        let w2 = tape.input_vec(data[3].clone());
        let pre = tape.affine(w1, x, b1).unwrap();
        let h = tape.tanh(pre);
        let loss = match variant {
            0 => {
                // dense -> tanh -> dot
                tape.dot(h, w2).unwrap()
            }
            1 => {
                // softmax head + dot with weights
                let p = tape.softmax_node(h).unwrap();
                tape.dot(p, w2).unwrap()
            }
            2 => {
                // cross-entropy head
                tape.cross_entropy(h, label).unwrap()
            }
            _ => {
                // attention-style: scores of h against fixed cells, convex combine
                let cells = tape.constant((cell_rows, hidden), cells_data.clone());
                let dots = tape.scaled_dots(h, cells, 1.0 / (hidden as f64).sqrt()).unwrap();
                let alpha = tape.softmax_node(dots).unwrap();
                let attended = tape.convex_combine(alpha, cells).unwrap();
                let d = tape.dot(attended, w2).unwrap();
                let s = tape.mul_elem(d, d).unwrap();
                tape.sum(s)
            }
        };
        (loss, vec![x, w1, b1, w2])
    };
    finite_difference_check(&build, &inputs)
}

/// Dual-graph straight-through check: the hard path's gradient into the
/// logits must equal the soft path's, for a linear head. Returns the worst
/// absolute difference.
pub fn straight_through_dual_graph_check(seed: u64) -> f64 {
    use super::tape::Mode;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..8usize);
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let head: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1);
    let mut hard = Tape::new();
    let l = hard.input_vec(logits.clone());
    let (onehot, _) = hard
        .categorical_straight_through(l, &mut sample_rng, Mode::Sample)
        .unwrap();
    let h = hard.constant_vec(head.clone());
    let loss = hard.dot(onehot, h).unwrap();
    hard.backward(loss);
    let hard_grad = hard.grad(l).to_vec();

    let mut soft = Tape::new();
    let ls = soft.input_vec(logits);
    let probs = soft.softmax_node(ls).unwrap();
    let hs = soft.constant_vec(head);
    let loss_s = soft.dot(probs, hs).unwrap();
    soft.backward(loss_s);
    let soft_grad = soft.grad(ls).to_vec();

    hard_grad
        .iter()
        .zip(&soft_grad)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
