//! Per-layer finite-difference checks on randomized small shapes.

use ndarray::Array2;
use rand::Rng;
use scandoc::neural::{
    cbow_loss_and_grad, lstm_cell, Batch, EncoderKind, LstmParams, Mode, Network, NetworkConfig, OutputActivation,
    ParamStore, Tape, Var, BN_EPS,
};

use super::{grad_check, random_matrix, rel_err, rng, weighted_sum};

pub const LAYERS: [&str; 9] = [
    "dense",
    "embedding",
    "batch_norm",
    "dropout_fixed_mask",
    "lstm_cell",
    "cbow_loss",
    "softmax_cross_entropy",
    "sigmoid_cross_entropy",
    "network_bilstm",
];

pub fn check(layer: &str, seed: u64) -> f64 {
    match layer {
        "dense" => dense(seed),
        "embedding" => embedding(seed),
        "batch_norm" => batch_norm(seed),
        "dropout_fixed_mask" => dropout(seed),
        "lstm_cell" => lstm(seed),
        "cbow_loss" => cbow(seed),
        "softmax_cross_entropy" => softmax_ce(seed),
        "sigmoid_cross_entropy" => sigmoid_ce(seed),
        "network_bilstm" => network(seed, EncoderKind::Bilstm, OutputActivation::Softmax),
        other => panic!("unknown layer {other}"),
    }
}

fn dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, i, o) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..6));
    let w = random_matrix(b, o, 1.0, &mut r);
    let inputs = [
        random_matrix(b, i, 1.0, &mut r),
        random_matrix(i, o, 1.0, &mut r),
        random_matrix(1, o, 1.0, &mut r),
    ];
    let f = move |t: &mut Tape, _: &ParamStore, v: &[Var]| {
        let z = t.matmul(v[0], v[1]).unwrap();
        let z = t.add_row(z, v[2]).unwrap();
        let a = t.tanh(z);
        weighted_sum(t, a, w.clone())
    };
    grad_check(&mut ParamStore::new(), &inputs, &f)
}

fn embedding(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (v, d, n) = (r.gen_range(2..7), r.gen_range(1..5), r.gen_range(1..9));
    let ids: Vec<usize> = (0..n).map(|_| r.gen_range(0..v)).collect();
    let w = random_matrix(n, d, 1.0, &mut r);
    let mut store = ParamStore::new();
    store.add("table", random_matrix(v, d, 1.0, &mut r), true);
    let f = move |t: &mut Tape, s: &ParamStore, _: &[Var]| {
        let table = t.param(s, s.find("table").unwrap());
        let e = t.gather(table, ids.clone()).unwrap();
        let pooled = t.mean_rows(e, vec![(0..n).collect(), vec![0]]);
        let e2 = t.gather(table, ids.clone()).unwrap();
        let a = t.sigmoid(e2);
        let ws = weighted_sum(t, a, w.clone());
        let ps = t.sum(pooled);
        t.add(ws, ps).unwrap()
    };
    grad_check(&mut store, &[], &f)
}

fn batch_norm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, d) = (r.gen_range(3..7), r.gen_range(1..5));
    let w = random_matrix(b, d, 1.0, &mut r);
    let inputs = [
        random_matrix(b, d, 2.0, &mut r),
        random_matrix(1, d, 1.0, &mut r),
        random_matrix(1, d, 1.0, &mut r),
    ];
    let f = move |t: &mut Tape, _: &ParamStore, v: &[Var]| {
        let (xhat, _, _) = t.normalize(v[0], BN_EPS).unwrap();
        let y = t.mul_row(xhat, v[1]).unwrap();
        let y = t.add_row(y, v[2]).unwrap();
        weighted_sum(t, y, w.clone())
    };
    grad_check(&mut ParamStore::new(), &inputs, &f)
}

fn dropout(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, d) = (r.gen_range(1..5), r.gen_range(1..6));
    let p = 0.2;
    let mask = Array2::from_shape_simple_fn((b, d), || if r.gen::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) });
    let w = random_matrix(b, d, 1.0, &mut r);
    let inputs = [random_matrix(b, d, 1.0, &mut r)];
    let f = move |t: &mut Tape, _: &ParamStore, v: &[Var]| {
        let a = t.tanh(v[0]);
        let m = t.mask(a, mask.clone()).unwrap();
        weighted_sum(t, m, w.clone())
    };
    grad_check(&mut ParamStore::new(), &inputs, &f)
}

fn lstm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, i, h) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
    let mut store = ParamStore::new();
    let p = LstmParams::register(&mut store, "cell", i, h, &mut r);
    let w = random_matrix(b, 2 * h, 1.0, &mut r);
    let inputs = [
        random_matrix(b, i, 1.0, &mut r),
        random_matrix(b, h, 1.0, &mut r),
        random_matrix(b, h, 1.0, &mut r),
    ];
    let f = move |t: &mut Tape, s: &ParamStore, v: &[Var]| {
        let (h1, c1) = lstm_cell(t, s, &p, v[0], v[1], v[2]).unwrap();
        let out = t.concat_cols(&[h1, c1]).unwrap();
        weighted_sum(t, out, w.clone())
    };
    grad_check(&mut store, &inputs, &f)
}

fn cbow(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (v, d) = (r.gen_range(3..8), r.gen_range(1..5));
    let mut w_in = random_matrix(v, d, 0.5, &mut r);
    let mut w_out = random_matrix(v, d, 0.5, &mut r);
    let context: Vec<usize> = (0..r.gen_range(1..5)).map(|_| r.gen_range(0..v)).collect();
    let center = r.gen_range(0..v);
    let negs: Vec<usize> = (0..r.gen_range(0..4)).map(|_| r.gen_range(0..v)).collect();
    let (_, g_in, g_out) = cbow_loss_and_grad(&w_in, &w_out, &context, center, &negs);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, analytic) in [g_in, g_out].iter().enumerate() {
        for idx in 0..v * d {
            let (row, col) = (idx / d, idx % d);
            let target = if k == 0 { &mut w_in } else { &mut w_out };
            let orig = target[[row, col]];
            target[[row, col]] = orig + h;
            let up = cbow_loss_and_grad(&w_in, &w_out, &context, center, &negs).0;
            let target = if k == 0 { &mut w_in } else { &mut w_out };
            target[[row, col]] = orig - h;
            let down = cbow_loss_and_grad(&w_in, &w_out, &context, center, &negs).0;
            let target = if k == 0 { &mut w_in } else { &mut w_out };
            target[[row, col]] = orig;
            worst = worst.max(rel_err(analytic[[row, col]], (up - down) / (2.0 * h)));
        }
    }
    worst
}

fn softmax_ce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, c) = (r.gen_range(1..6), r.gen_range(2..5));
    let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
    let inputs = [random_matrix(b, c, 3.0, &mut r)];
    let f = move |t: &mut Tape, _: &ParamStore, v: &[Var]| t.softmax_ce(v[0], targets.clone()).unwrap();
    grad_check(&mut ParamStore::new(), &inputs, &f)
}

fn sigmoid_ce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, c) = (r.gen_range(1..6), r.gen_range(2..5));
    let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
    let inputs = [random_matrix(b, c, 3.0, &mut r)];
    let f = move |t: &mut Tape, _: &ParamStore, v: &[Var]| t.sigmoid_bce(v[0], targets.clone()).unwrap();
    grad_check(&mut ParamStore::new(), &inputs, &f)
}

/// A tiny network configuration for whole-model checks.
pub fn tiny_config(encoder: EncoderKind, output: OutputActivation) -> NetworkConfig {
    let mut c = NetworkConfig::default();
    c.structured_branch.width = 4;
    c.sequence_branch.encoder = encoder;
    c.sequence_branch.max_len = 21;
    c.sequence_branch.embed_dim = 3;
    c.sequence_branch.lstm_hidden = 3;
    c.classifier.width = 5;
    c.classifier.output = output;
    c
}

/// Random right-padded token rows of length `max_len`.
pub fn random_tokens(n: usize, max_len: usize, vocab: usize, longest: usize, r: &mut impl Rng) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| {
            let len = r.gen_range(0..=longest);
            let mut row: Vec<usize> = (0..len).map(|_| r.gen_range(1..vocab)).collect();
            row.resize(max_len, 0);
            row
        })
        .collect()
}

/// Every parameter of a whole network on a 4-sample batch in train mode,
/// with dropout masks fixed by reseeding.
pub fn network(seed: u64, encoder: EncoderKind, output: OutputActivation) -> f64 {
    let mut r = rng(seed);
    let config = tiny_config(encoder, output);
    let vocab = 7;
    let net = Network::new(&config, vocab, None, seed).unwrap();
    let structured = random_matrix(4, 6, 2.0, &mut r);
    let tokens = random_tokens(4, 21, vocab, 4, &mut r);
    let labels: Vec<usize> = (0..4).map(|_| r.gen_range(0..3)).collect();
    let mut store = net.store.clone();
    // Zero biases on all-zero rows would sit exactly on a ReLU kink.
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for &id in &ids {
        let v = &mut store.get_mut(id).value;
        let noise = random_matrix(v.nrows(), v.ncols(), 0.1, &mut r);
        *v += &noise;
    }
    // The network owns its tape, so the differences go through whole passes.
    let loss_at = |store: &ParamStore| -> (f64, Vec<Option<Array2<f64>>>) {
        let mut n = Network::new(&config, vocab, None, seed).unwrap();
        n.store = store.clone();
        let mut drng = rng(seed ^ 0xd0);
        let mut pass = n
            .forward(
                &Batch {
                    structured: &structured,
                    tokens: &tokens,
                },
                Mode::Train,
                &mut drng,
            )
            .unwrap();
        let loss = n.loss(&mut pass, &labels).unwrap();
        let grads = n.backward(&pass, loss).unwrap();
        (pass.tape.value(loss)[[0, 0]], grads)
    };
    let (_, grads) = loss_at(&store);
    // Deep LSTM gradients reach 1e-7; a wider step keeps round-off below them.
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for id in ids {
        let cols = store.get(id).value.ncols();
        let analytic = grads[id.0].clone().unwrap_or_else(|| Array2::zeros(store.get(id).value.raw_dim()));
        for idx in 0..analytic.len() {
            let (row, col) = (idx / cols, idx % cols);
            let orig = store.get(id).value[[row, col]];
            store.get_mut(id).value[[row, col]] = orig + h;
            let up = loss_at(&store).0;
            store.get_mut(id).value[[row, col]] = orig - h;
            let down = loss_at(&store).0;
            store.get_mut(id).value[[row, col]] = orig;
            worst = worst.max(rel_err(analytic[[row, col]], (up - down) / (2.0 * h)));
        }
    }
    worst
}
