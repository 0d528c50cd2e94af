//! Continuous bag-of-words embeddings trained with negative sampling.
//!
//! For each position the context embeddings (input table) within `window`
//! tokens are averaged into `h`; the loss is
//! `−log σ(u_c·h) − Σ_k log σ(−u_k·h)` over the true centre word `c` and
//! `negatives` noise words drawn from the unigram distribution raised to ¾,
//! with `u` taken from a separate output table.

use ndarray::{Array1, Array2};
use rand::distributions::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::codec::PAD_ID;
use super::params::gaussian;
use super::tape::logistic;
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CbowOutcome {
    /// `vocab_size × dim` input embeddings.
    pub embeddings: Array2<f64>,
    /// Mean loss per epoch.
    pub losses: Vec<f64>,
}

struct ExampleGrad {
    loss: f64,
    /// Gradient with respect to the averaged context vector.
    g_h: Array1<f64>,
    /// (output row, gradient) per scored word, duplicates kept.
    out: Vec<(usize, Array1<f64>)>,
}

fn example_grad(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    context: &[usize],
    center: usize,
    negatives: &[usize],
) -> ExampleGrad {
    let mut h = Array1::zeros(w_in.ncols());
    for &c in context {
        h += &w_in.row(c);
    }
    h /= context.len() as f64;
    let mut loss = 0.0;
    let mut g_h = Array1::zeros(h.len());
    let mut out = Vec::with_capacity(negatives.len() + 1);
    let targets = std::iter::once((center, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (word, label) in targets {
        let p = logistic(w_out.row(word).dot(&h));
        loss -= if label == 1.0 { p.max(1e-300).ln() } else { (1.0 - p).max(1e-300).ln() };
        let d = p - label;
        g_h.scaled_add(d, &w_out.row(word));
        out.push((word, &h * d));
    }
    ExampleGrad { loss, g_h, out }
}

/// Loss and dense gradients for one (context, centre, negatives) example.
pub fn cbow_loss_and_grad(
    w_in: &Array2<f64>,
    w_out: &Array2<f64>,
    context: &[usize],
    center: usize,
    negatives: &[usize],
) -> (f64, Array2<f64>, Array2<f64>) {
    let mut g_in = Array2::zeros(w_in.raw_dim());
    let mut g_out = Array2::zeros(w_out.raw_dim());
    if context.is_empty() {
        return (0.0, g_in, g_out);
    }
    let eg = example_grad(w_in, w_out, context, center, negatives);
    let share = 1.0 / context.len() as f64;
    for &c in context {
        g_in.row_mut(c).scaled_add(share, &eg.g_h);
    }
    for (w, g) in &eg.out {
        let mut row = g_out.row_mut(*w);
        row += g;
    }
    (eg.loss, g_in, g_out)
}

fn context_of(sentence: &[usize], pos: usize, window: usize) -> Vec<usize> {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(sentence.len());
    (lo..hi).filter(|&j| j != pos).map(|j| sentence[j]).collect()
}

/// Trains input embeddings over id sequences (PAD ids are ignored).
pub fn pretrain_cbow(corpus: &[Vec<usize>], vocab_size: usize, config: &CbowConfig) -> Result<CbowOutcome> {
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().copied().filter(|&t| t != PAD_ID).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::invalid("CBOW corpus is empty"));
    }
    if let Some(bad) = sentences.iter().flatten().find(|&&t| t >= vocab_size) {
        return Err(Error::invalid(format!("token id {bad} outside vocabulary of {vocab_size}")));
    }
    let mut rng = rng_for(config.seed, "cbow");
    let mut w_in = gaussian(vocab_size, config.dim, 0.01, &mut rng);
    w_in.row_mut(PAD_ID).fill(0.0);
    let mut w_out = Array2::zeros((vocab_size, config.dim));

    let mut counts = vec![0.0f64; vocab_size];
    for &t in sentences.iter().flatten() {
        counts[t] += 1.0;
    }
    let distinct = counts.iter().filter(|&&c| c > 0.0).count();
    let n_neg = if distinct < 2 { 0 } else { config.negatives };
    let weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let lr = config.learning_rate;

    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (mut total, mut n) = (0.0, 0usize);
        for s in &sentences {
            for pos in 0..s.len() {
                let context = context_of(s, pos, config.window);
                if context.is_empty() {
                    continue;
                }
                let center = s[pos];
                let mut negs = Vec::with_capacity(n_neg);
                while negs.len() < n_neg {
                    let k = noise.sample(&mut rng);
                    if k != center {
                        negs.push(k);
                    }
                }
                let eg = example_grad(&w_in, &w_out, &context, center, &negs);
                total += eg.loss;
                n += 1;
                let step = -lr / context.len() as f64;
                for &c in &context {
                    w_in.row_mut(c).scaled_add(step, &eg.g_h);
                }
                for (w, g) in &eg.out {
                    w_out.row_mut(*w).scaled_add(-lr, g);
                }
            }
        }
        losses.push(if n > 0 { total / n as f64 } else { 0.0 });
    }
    Ok(CbowOutcome { embeddings: w_in, losses })
}
