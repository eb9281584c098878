//! Reverse-mode gradients against central finite differences.

use genie_core::nn::{Activation, Net};
use genie_core::RngStream;
use ndarray::Array2;

const H: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
const FLOOR: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn objective(net: &Net, x: &Array2<f64>, upstream: &Array2<f64>) -> f64 {
    let out = net.forward_batch(x.view()).unwrap();
    (&out * upstream).sum()
}

fn random_case(seed: u64) -> (Net, Array2<f64>, Array2<f64>) {
    let mut rng = RngStream::new(seed, 7);
    let depth = 1 + rng.below(3);
    let mut dims = vec![1 + rng.below(6)];
    for _ in 0..depth {
        dims.push(2 + rng.below(7));
    }
    dims.push(1 + rng.below(5));
    let net = Net::mlp(&dims, Activation::Silu, &mut rng).unwrap();
    let batch = 1 + rng.below(4);
    let x = Array2::from_shape_fn((batch, dims[0]), |_| 2.0 * rng.normal());
    let up = Array2::from_shape_fn((batch, *dims.last().unwrap()), |_| rng.normal());
    (net, x, up)
}

#[test]
fn parameter_and_input_gradients_match_finite_differences() {
    let started = std::time::Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (net, x, up) = random_case(seed);
        let (_, tape) = net.forward_with_tape(x.view()).unwrap();
        let (grads, dx) = net.backward(&tape, up.view()).unwrap();
        let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();

        let mut probe = net.clone();
        let mut k = 0;
        for p in 0..probe.parameters_mut().len() {
            let len = probe.parameters_mut()[p].len();
            for i in 0..len {
                let orig = probe.parameters_mut()[p][i];
                probe.parameters_mut()[p][i] = orig + H;
                let plus = objective(&probe, &x, &up);
                probe.parameters_mut()[p][i] = orig - H;
                let minus = objective(&probe, &x, &up);
                probe.parameters_mut()[p][i] = orig;
                worst = worst.max(rel_err(analytic[k], (plus - minus) / (2.0 * H)));
                k += 1;
            }
        }
        assert_eq!(k, analytic.len());

        for idx in ndarray::indices(x.raw_dim()) {
            let mut xp = x.clone();
            xp[idx] += H;
            let mut xm = x.clone();
            xm[idx] -= H;
            let numeric = (objective(&net, &xp, &up) - objective(&net, &xm, &up)) / (2.0 * H);
            worst = worst.max(rel_err(dx[idx], numeric));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn single_example_gradient_agrees_with_batched() {
    let (net, x, up) = random_case(99);
    let (_, tape) = net.forward_with_tape(x.view()).unwrap();
    let (batched, _) = net.backward(&tape, up.view()).unwrap();
    let mut summed: Vec<f64> = vec![0.0; net.parameter_count()];
    for b in 0..x.nrows() {
        let (g, _) = net
            .grad(x.row(b).as_slice().unwrap(), up.row(b).as_slice().unwrap())
            .unwrap();
        for (acc, v) in summed.iter_mut().zip(g.slices().into_iter().flatten()) {
            *acc += v;
        }
    }
    for (a, b) in summed.iter().zip(batched.slices().into_iter().flatten()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
