//! Shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod corpus;
pub mod layers;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scandoc::neural::{ParamStore, Tape, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-scale..scale))
}

/// |a − n| / max(|a| + |n|, 1e-6)
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

/// Scalar `Σ out ⊙ weights` so that any layer output can be checked.
pub fn weighted_sum(tape: &mut Tape, out: Var, weights: Array2<f64>) -> Var {
    let w = tape.input(weights);
    let p = tape.mul(out, w).expect("weights match output shape");
    tape.sum(p)
}

pub type Builder<'a> = dyn Fn(&mut Tape, &ParamStore, &[Var]) -> Var + 'a;

fn eval(store: &ParamStore, inputs: &[Array2<f64>], f: &Builder<'_>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = f(&mut tape, store, &vars);
    tape.value(out)[[0, 0]]
}

/// Largest relative error between the tape gradient and central differences,
/// over every input entry and every stored parameter.
pub fn grad_check(store: &mut ParamStore, inputs: &[Array2<f64>], f: &Builder<'_>) -> f64 {
    let h = 1e-6;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = f(&mut tape, store, &vars);
    let grads = tape.backward(out).expect("finite loss");
    let pgrads = grads.param_grads(store.len());
    let mut worst: f64 = 0.0;

    let mut xs = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).cloned().unwrap_or_else(|| Array2::zeros(inputs[k].raw_dim()));
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let orig = xs[k][[r, c]];
            xs[k][[r, c]] = orig + h;
            let up = eval(store, &xs, f);
            xs[k][[r, c]] = orig - h;
            let down = eval(store, &xs, f);
            xs[k][[r, c]] = orig;
            worst = worst.max(rel_err(analytic[[r, c]], (up - down) / (2.0 * h)));
        }
    }
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let shape = store.get(id).value.raw_dim();
        let analytic = pgrads[id.0].clone().unwrap_or_else(|| Array2::zeros(shape));
        let cols = shape[1];
        for idx in 0..analytic.len() {
            let (r, c) = (idx / cols, idx % cols);
            let orig = store.get(id).value[[r, c]];
            store.get_mut(id).value[[r, c]] = orig + h;
            let up = eval(store, inputs, f);
            store.get_mut(id).value[[r, c]] = orig - h;
            let down = eval(store, inputs, f);
            store.get_mut(id).value[[r, c]] = orig;
            worst = worst.max(rel_err(analytic[[r, c]], (up - down) / (2.0 * h)));
        }
    }
    worst
}
